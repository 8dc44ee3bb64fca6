#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "mexit/tensor.hpp"

namespace mexit {

enum class LayerKind { dense, conv2d, maxpool2d, relu, flatten, dropout, softmax };
enum class Padding { same, valid };

std::string_view to_string(LayerKind kind);
LayerKind layer_kind_from_string(std::string_view name);

/// Declarative description of one layer. Only the fields relevant to `kind`
/// are read; the factory functions set sensible defaults for the rest.
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t units = 0;    // dense
  std::size_t filters = 0;  // conv2d
  std::size_t kernel = 3;   // conv2d, maxpool2d
  std::size_t stride = 1;   // conv2d, maxpool2d
  Padding padding = Padding::same;
  double rate = 0.5;        // dropout

  static LayerSpec dense(std::size_t units);
  static LayerSpec conv2d(std::size_t filters, std::size_t kernel = 3, std::size_t stride = 1,
                          Padding padding = Padding::same);
  static LayerSpec maxpool2d(std::size_t kernel = 2, std::size_t stride = 2);
  static LayerSpec relu();
  static LayerSpec flatten();
  static LayerSpec dropout(double rate = 0.5);
  static LayerSpec softmax();

  bool has_parameters() const { return kind == LayerKind::dense || kind == LayerKind::conv2d; }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Per-sample output shape for a per-sample input shape. Throws ShapeError
/// when the input cannot feed this layer.
Shape output_shape(const LayerSpec& layer, const Shape& input);

/// Shapes of the layer's parameter tensors as (weight, bias); empty for
/// parameterless kinds.
std::pair<Shape, Shape> parameter_shapes(const LayerSpec& layer, const Shape& input);

std::string describe(const LayerSpec& layer);

}  // namespace mexit
