#include "mexit/layers.hpp"

#include <array>
#include <sstream>

#include "mexit/error.hpp"

namespace mexit {

namespace {

constexpr std::array<std::pair<LayerKind, std::string_view>, 7> kKindNames{{
    {LayerKind::dense, "dense"},
    {LayerKind::conv2d, "conv2d"},
    {LayerKind::maxpool2d, "maxpool2d"},
    {LayerKind::relu, "relu"},
    {LayerKind::flatten, "flatten"},
    {LayerKind::dropout, "dropout"},
    {LayerKind::softmax, "softmax"},
}};

std::size_t conv_extent(std::size_t in, const LayerSpec& l) {
  const std::size_t pad = l.padding == Padding::same ? (l.kernel - 1) / 2 : 0;
  if (in + 2 * pad < l.kernel) return 0;
  return (in + 2 * pad - l.kernel) / l.stride + 1;
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  for (const auto& [k, name] : kKindNames)
    if (k == kind) return name;
  return "unknown";
}

LayerKind layer_kind_from_string(std::string_view name) {
  for (const auto& [k, n] : kKindNames)
    if (n == name) return k;
  throw InvalidArgument("unknown layer kind '" + std::string(name) + "'");
}

LayerSpec LayerSpec::dense(std::size_t units) {
  LayerSpec l;
  l.kind = LayerKind::dense;
  l.units = units;
  return l;
}

LayerSpec LayerSpec::conv2d(std::size_t filters, std::size_t kernel, std::size_t stride, Padding padding) {
  LayerSpec l;
  l.kind = LayerKind::conv2d;
  l.filters = filters;
  l.kernel = kernel;
  l.stride = stride;
  l.padding = padding;
  return l;
}

LayerSpec LayerSpec::maxpool2d(std::size_t kernel, std::size_t stride) {
  LayerSpec l;
  l.kind = LayerKind::maxpool2d;
  l.kernel = kernel;
  l.stride = stride;
  l.padding = Padding::valid;
  return l;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

LayerSpec LayerSpec::flatten() {
  LayerSpec l;
  l.kind = LayerKind::flatten;
  return l;
}

LayerSpec LayerSpec::dropout(double rate) {
  LayerSpec l;
  l.kind = LayerKind::dropout;
  l.rate = rate;
  return l;
}

LayerSpec LayerSpec::softmax() {
  LayerSpec l;
  l.kind = LayerKind::softmax;
  return l;
}

Shape output_shape(const LayerSpec& l, const Shape& in) {
  auto fail = [&](const std::string& why) -> ShapeError {
    return ShapeError(std::string(to_string(l.kind)) + " cannot take input " + shape_to_string(in) + ": " + why);
  };
  switch (l.kind) {
    case LayerKind::dense:
      if (in.size() != 1) throw fail("expected a rank-1 feature vector");
      if (l.units == 0) throw fail("dense layer needs at least one unit");
      return {l.units};
    case LayerKind::conv2d: {
      if (in.size() != 3) throw fail("expected [channels,height,width]");
      if (l.filters == 0 || l.kernel == 0 || l.stride == 0) throw fail("filters, kernel and stride must be positive");
      if (l.padding == Padding::same && l.kernel % 2 == 0) throw fail("'same' padding needs an odd kernel");
      const std::size_t h = conv_extent(in[1], l), w = conv_extent(in[2], l);
      if (h == 0 || w == 0) throw fail("kernel larger than padded input");
      return {l.filters, h, w};
    }
    case LayerKind::maxpool2d: {
      if (in.size() != 3) throw fail("expected [channels,height,width]");
      if (l.kernel == 0 || l.stride == 0) throw fail("kernel and stride must be positive");
      if (in[1] < l.kernel || in[2] < l.kernel) throw fail("pool window larger than input");
      return {in[0], (in[1] - l.kernel) / l.stride + 1, (in[2] - l.kernel) / l.stride + 1};
    }
    case LayerKind::flatten:
      return {shape_size(in)};
    case LayerKind::dropout:
      if (!(l.rate >= 0.0 && l.rate < 1.0)) throw fail("dropout rate must be in [0,1)");
      return in;
    case LayerKind::softmax:
      if (in.size() != 1) throw fail("expected a rank-1 logit vector");
      return in;
    case LayerKind::relu:
      return in;
  }
  throw fail("unhandled layer kind");
}

std::pair<Shape, Shape> parameter_shapes(const LayerSpec& l, const Shape& in) {
  switch (l.kind) {
    case LayerKind::dense:
      return {{l.units, in.at(0)}, {l.units}};
    case LayerKind::conv2d:
      return {{l.filters, in.at(0), l.kernel, l.kernel}, {l.filters}};
    default:
      return {};
  }
}

std::string describe(const LayerSpec& l) {
  std::ostringstream os;
  os << to_string(l.kind);
  switch (l.kind) {
    case LayerKind::dense: os << "(" << l.units << ")"; break;
    case LayerKind::conv2d:
      os << "(" << l.filters << ", k=" << l.kernel << ", s=" << l.stride
         << (l.padding == Padding::same ? ", same" : ", valid") << ")";
      break;
    case LayerKind::maxpool2d: os << "(k=" << l.kernel << ", s=" << l.stride << ")"; break;
    case LayerKind::dropout: os << "(" << l.rate << ")"; break;
    default: break;
  }
  return os.str();
}

}  // namespace mexit
