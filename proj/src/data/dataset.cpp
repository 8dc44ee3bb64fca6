#include "mexit/dataset.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mexit/error.hpp"
#include "mexit/rng.hpp"

namespace mexit {

void Dataset::validate() const {
  if (inputs.rank() == 0 || inputs.dim(0) != labels.size()) {
    throw InvalidArgument("dataset '" + provenance + "': input count does not match label count");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) {
      throw InvalidArgument("dataset '" + provenance + "': label " + std::to_string(labels[i]) + " of sample " +
                            std::to_string(i) + " is not below class count " + std::to_string(classes));
    }
  }
  if (!hard.empty() && hard.size() != labels.size()) throw InvalidArgument("dataset '" + provenance + "': hard mask size");
}

Dataset Dataset::subset(std::span<const std::size_t> rows, const std::string& tag) const {
  Dataset out;
  out.inputs = gather_rows(inputs, rows);
  out.classes = classes;
  out.provenance = provenance + "/" + tag;
  out.labels.reserve(rows.size());
  for (std::size_t r : rows) out.labels.push_back(labels.at(r));
  if (!hard.empty()) {
    out.hard.reserve(rows.size());
    for (std::size_t r : rows) out.hard.push_back(hard[r]);
  }
  return out;
}

Dataset load_cifar_binary(const std::vector<std::filesystem::path>& paths, CifarVariant variant,
                          std::size_t max_records) {
  constexpr std::size_t kPixels = 3 * 32 * 32;
  const std::size_t label_bytes = variant == CifarVariant::cifar10 ? 1 : 2;
  const std::size_t record = label_bytes + kPixels;

  std::vector<double> pixels;
  std::vector<std::size_t> labels;
  for (const auto& path : paths) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open CIFAR file '" + path.string() + "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() % record != 0) {
      const std::size_t offset = bytes.size() - bytes.size() % record;
      throw FormatError("CIFAR file '" + path.string() + "': truncated record at byte offset " +
                        std::to_string(offset) + " (size " + std::to_string(bytes.size()) +
                        " is not a multiple of the " + std::to_string(record) + "-byte record)");
    }
    for (std::size_t off = 0; off < bytes.size(); off += record) {
      if (max_records && labels.size() == max_records) break;
      labels.push_back(bytes[off + label_bytes - 1]);
      for (std::size_t k = 0; k < kPixels; ++k) pixels.push_back(static_cast<double>(bytes[off + label_bytes + k]) / 255.0);
    }
  }
  Dataset out;
  out.classes = variant == CifarVariant::cifar10 ? 10 : 100;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= out.classes) {
      throw FormatError("CIFAR record " + std::to_string(i) + ": label " + std::to_string(labels[i]) +
                        " out of range at byte offset " + std::to_string(i * record + label_bytes - 1));
    }
  }
  out.inputs = Tensor(Shape{labels.size(), 3, 32, 32}, std::move(pixels));
  out.labels = std::move(labels);
  out.provenance = variant == CifarVariant::cifar10 ? "cifar10" : "cifar100";
  return out;
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.classes < 1) throw InvalidArgument("synthetic data needs at least one class");
  if (spec.samples < spec.classes) throw InvalidArgument("synthetic data needs at least one sample per class");
  if (!(spec.hard_fraction >= 0.0 && spec.hard_fraction <= 1.0)) throw InvalidArgument("hard_fraction must be in [0,1]");
  if (!(spec.hard_label_flip >= 0.0 && spec.hard_label_flip <= 1.0)) throw InvalidArgument("hard_label_flip must be in [0,1]");

  Rng rng(spec.seed);
  const std::size_t dim = shape_size(spec.sample_shape);
  std::vector<double> centers(spec.classes * dim);
  for (double& c : centers) c = spec.center_scale * rng.normal();

  // Balanced labels before the scramble, so every class is present.
  std::vector<std::size_t> truth(spec.samples);
  for (std::size_t n = 0; n < spec.samples; ++n) truth[n] = n % spec.classes;
  rng.shuffle(truth);

  std::vector<std::size_t> order(spec.samples);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  const auto hard_count = static_cast<std::size_t>(std::llround(spec.hard_fraction * static_cast<double>(spec.samples)));
  std::vector<std::uint8_t> hard(spec.samples, 0);
  for (std::size_t k = 0; k < hard_count; ++k) hard[order[k]] = 1;

  Dataset out;
  out.classes = spec.classes;
  out.inputs = Tensor(batched(spec.samples, spec.sample_shape));
  out.labels.resize(spec.samples);
  for (std::size_t n = 0; n < spec.samples; ++n) {
    const double sigma = spec.noise * (hard[n] ? spec.hard_noise_multiplier : 1.0);
    auto x = out.inputs.sample(n);
    const double* c = centers.data() + truth[n] * dim;
    for (std::size_t d = 0; d < dim; ++d) x[d] = c[d] + sigma * rng.normal();
    std::size_t label = truth[n];
    if (hard[n] && spec.classes > 1 && rng.uniform() < spec.hard_label_flip) {
      label = (truth[n] + 1 + rng.index(spec.classes - 1)) % spec.classes;
    }
    out.labels[n] = label;
  }
  out.hard = std::move(hard);
  out.provenance = "synthetic";
  return out;
}

void write_text_dataset(const std::filesystem::path& path, const Dataset& data) {
  data.validate();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << data.size() << "," << data.classes;
  for (std::size_t d : data.sample_shape()) out << "," << d;
  out << "\n";
  char buf[32];
  for (std::size_t n = 0; n < data.size(); ++n) {
    for (double v : data.inputs.sample(n)) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << buf << ",";
    }
    out << data.labels[n] << "\n";
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    fields.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

template <typename T>
T parse_number(std::string_view field, const std::string& where) {
  while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.remove_suffix(1);
  while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
  T value{};
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw FormatError(where + ": cannot parse '" + std::string(field) + "'");
  }
  return value;
}

}  // namespace

Dataset read_text_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": missing header line");
  auto header = split_commas(line);
  if (header.size() < 3) throw FormatError(path.string() + ": header must be N,K,D...");
  const auto n = parse_number<std::size_t>(header[0], path.string() + ":1");
  Dataset out;
  out.classes = parse_number<std::size_t>(header[1], path.string() + ":1");
  Shape sample;
  for (std::size_t i = 2; i < header.size(); ++i) sample.push_back(parse_number<std::size_t>(header[i], path.string() + ":1"));
  const std::size_t dim = shape_size(sample);

  std::vector<double> values;
  values.reserve(n * dim);
  out.labels.reserve(n);
  for (std::size_t row = 0; row < n; ++row) {
    const std::string where = path.string() + ":" + std::to_string(row + 2);
    if (!std::getline(in, line)) throw FormatError(where + ": expected " + std::to_string(n) + " samples");
    auto fields = split_commas(line);
    if (fields.size() != dim + 1) {
      throw FormatError(where + ": expected " + std::to_string(dim + 1) + " fields, got " + std::to_string(fields.size()));
    }
    for (std::size_t d = 0; d < dim; ++d) values.push_back(parse_number<double>(fields[d], where));
    out.labels.push_back(parse_number<std::size_t>(fields[dim], where));
  }
  out.inputs = Tensor(batched(n, sample), std::move(values));
  out.provenance = path.filename().string();
  out.validate();
  return out;
}

void SplitSpec::validate() const {
  for (double f : {train, validation, test, hyper}) {
    if (!(f > 0.0 && f < 1.0)) throw InvalidArgument("split fractions must each be in (0,1)");
  }
  if (std::abs(train + validation + test + hyper - 1.0) > 1e-9) throw InvalidArgument("split fractions must sum to 1");
}

SplitIndices split_indices(std::size_t n, const SplitSpec& spec) {
  spec.validate();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(spec.seed);
  rng.shuffle(order);

  // The epsilon absorbs representation error such as 0.29 * 100 = 28.999...
  auto count = [n](double f) { return static_cast<std::size_t>(std::floor(f * static_cast<double>(n) + 1e-9)); };
  const std::size_t nv = count(spec.validation), nt = count(spec.test), nh = count(spec.hyper);
  const std::size_t ntrain = n - nv - nt - nh;

  SplitIndices out;
  auto take = [&](std::vector<std::size_t>& dst, std::size_t from, std::size_t len) {
    dst.assign(order.begin() + static_cast<std::ptrdiff_t>(from), order.begin() + static_cast<std::ptrdiff_t>(from + len));
  };
  take(out.train, 0, ntrain);
  take(out.validation, ntrain, nv);
  take(out.test, ntrain + nv, nt);
  take(out.hyper, ntrain + nv + nt, nh);
  return out;
}

Splits split(const Dataset& data, const SplitSpec& spec) {
  auto idx = split_indices(data.size(), spec);
  return {data.subset(idx.train, "train"), data.subset(idx.validation, "validation"), data.subset(idx.test, "test"),
          data.subset(idx.hyper, "hyper")};
}

}  // namespace mexit
