#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hpt/errors.hpp"
#include "hpt/tensor.hpp"

namespace hpt {

using Label = std::uint32_t;
using Labels = std::vector<Label>;
using ParamList = std::vector<Tensor>;

enum class Activation { relu, tanh };

inline std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + s + "' (expected relu or tanh)");
}

/// MLP geometry: input -> hidden_dims... -> embed_dim. The projection into the
/// joint space is linear; the activation applies after every hidden layer.
struct EncoderSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;
  std::size_t embed_dim = 0;
  Activation activation = Activation::relu;

  std::size_t num_layers() const { return hidden_dims.size() + 1; }
  std::size_t layer_in(std::size_t l) const { return l == 0 ? input_dim : hidden_dims[l - 1]; }
  std::size_t layer_out(std::size_t l) const { return l == hidden_dims.size() ? embed_dim : hidden_dims[l]; }

  /// Closed-form count of scalar parameters (weights plus biases).
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < num_layers(); ++l) n += layer_in(l) * layer_out(l) + layer_out(l);
    return n;
  }

  friend bool operator==(const EncoderSpec&, const EncoderSpec&) = default;
};

inline constexpr double kDefaultTemperature = 5.0;

/// Fixed pixel normalisation applied before the image encoder: (x - mean) / std.
inline constexpr double kPixelMean = 0.5;
inline constexpr double kPixelStd = 0.25;

/// Image encoder F_theta and class-text encoder G_phi sharing one embedding space.
///
/// `params` holds the image encoder's (weight, bias) pairs followed by the text
/// encoder's. Weights are stored input-major (in x out) so a batch forward pass
/// is `h W + b`.
struct DualEncoderModel {
  EncoderSpec image_spec;
  EncoderSpec text_spec;
  std::size_t num_classes = 0;
  double temperature = kDefaultTemperature;
  ParamList params;

  std::size_t image_tensor_count() const { return 2 * image_spec.num_layers(); }
  std::size_t text_tensor_count() const { return 2 * text_spec.num_layers(); }

  std::span<const Tensor> image_params() const { return std::span(params).first(image_tensor_count()); }
  std::span<const Tensor> text_params() const { return std::span(params).subspan(image_tensor_count()); }

  /// One-hot class prompts; row m stands in for the text of class m.
  Tensor class_tokens() const { return Tensor::identity(num_classes); }

  std::size_t parameter_count() const { return image_spec.parameter_count() + text_spec.parameter_count(); }

  std::vector<std::string> param_names() const {
    std::vector<std::string> names;
    auto add = [&](const char* prefix, const EncoderSpec& spec) {
      for (std::size_t l = 0; l < spec.num_layers(); ++l) {
        names.push_back(std::string(prefix) + ".w" + std::to_string(l));
        names.push_back(std::string(prefix) + ".b" + std::to_string(l));
      }
    };
    add("image", image_spec);
    add("text", text_spec);
    return names;
  }

  std::vector<Shape> param_shapes() const {
    std::vector<Shape> shapes;
    for (const EncoderSpec* spec : {&image_spec, &text_spec}) {
      for (std::size_t l = 0; l < spec->num_layers(); ++l) {
        shapes.push_back({spec->layer_in(l), spec->layer_out(l)});
        shapes.push_back({spec->layer_out(l)});
      }
    }
    return shapes;
  }

  /// Throws ContractError if any invariant is broken.
  void validate() const {
    if (image_spec.embed_dim != text_spec.embed_dim) throw ContractError("model: embed_dim differs between encoders");
    if (text_spec.input_dim != num_classes) throw ContractError("model: text encoder input must equal num_classes");
    if (!(temperature > 0.0)) throw ContractError("model: temperature must be positive");
    const auto shapes = param_shapes();
    if (shapes.size() != params.size()) throw ContractError("model: parameter tensor count mismatch");
    for (std::size_t i = 0; i < shapes.size(); ++i) {
      if (params[i].shape() != shapes[i]) {
        throw ContractError(detail::concat("model: parameter ", param_names()[i], " has shape ",
                                           shape_str(params[i].shape()), ", expected ", shape_str(shapes[i])));
      }
    }
  }
};

/// Draws every weight and bias from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
inline DualEncoderModel init_model(const EncoderSpec& image_spec, const EncoderSpec& text_spec, std::size_t num_classes,
                                   std::uint64_t seed) {
  if (num_classes < 2) throw ConfigError("init_model: num_classes must be at least 2");
  if (image_spec.embed_dim != text_spec.embed_dim) {
    throw ConfigError(detail::concat("init_model: embed_dim mismatch (image ", image_spec.embed_dim, ", text ",
                                     text_spec.embed_dim, ")"));
  }
  if (text_spec.input_dim != num_classes) {
    throw ConfigError(detail::concat("init_model: text input_dim ", text_spec.input_dim, " != num_classes ", num_classes));
  }
  for (const EncoderSpec* spec : {&image_spec, &text_spec}) {
    if (spec->input_dim == 0 || spec->embed_dim == 0) throw ConfigError("init_model: dimensions must be positive");
    for (auto h : spec->hidden_dims)
      if (h == 0) throw ConfigError("init_model: hidden dimensions must be positive");
  }

  DualEncoderModel model{image_spec, text_spec, num_classes, kDefaultTemperature, {}};
  std::mt19937_64 rng(seed);
  for (const Shape& shape : model.param_shapes()) {
    const std::size_t fan_in = shape.size() == 2 ? shape[0] : model.params.back().shape()[0];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor t(shape);
    for (double& v : t.values()) v = dist(rng);
    model.params.push_back(std::move(t));
  }
  return model;
}

/// Graph handles for a model's parameters, in `params` order.
using ModelVars = std::vector<Var>;

inline ModelVars bind_model(Graph& g, const DualEncoderModel& model, bool train_image = true, bool train_text = true) {
  ModelVars vars;
  vars.reserve(model.params.size());
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    const bool trainable = i < model.image_tensor_count() ? train_image : train_text;
    vars.push_back(g.leaf(model.params[i], trainable));
  }
  return vars;
}

inline Var encoder_forward(const EncoderSpec& spec, std::span<const Var> layer_params, Var x) {
  if (x.value().rank() != 2 || x.value().cols() != spec.input_dim) {
    throw DimensionError(detail::concat("encoder: expected batch x ", spec.input_dim, " input, got ",
                                        shape_str(x.value().shape())));
  }
  Var h = x;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    h = add(matmul(h, layer_params[2 * l]), layer_params[2 * l + 1]);
    if (l + 1 < spec.num_layers()) h = spec.activation == Activation::relu ? relu(h) : tanh(h);
  }
  return l2_normalize_rows(h);
}

inline Var image_embeddings(const DualEncoderModel& model, const ModelVars& vars, Var images) {
  Graph& g = *images.graph;
  Var mean_row = g.constant(Tensor({1, images.value().cols()}, kPixelMean));
  Var normalized = scale(sub(images, mean_row), 1.0 / kPixelStd);
  return encoder_forward(model.image_spec, std::span(vars).first(model.image_tensor_count()), normalized);
}

inline Var text_embeddings(const DualEncoderModel& model, const ModelVars& vars, Var tokens) {
  return encoder_forward(model.text_spec, std::span(vars).subspan(model.image_tensor_count()), tokens);
}

/// temperature * cosine(F(x_i), G(t_m)) for every image i and class m.
inline Var similarity_logits(const DualEncoderModel& model, const ModelVars& vars, Var images) {
  Graph& g = *images.graph;
  Var img = image_embeddings(model, vars, images);
  Var txt = text_embeddings(model, vars, g.constant(model.class_tokens()));
  return scale(matmul(img, transpose(txt)), model.temperature);
}

// Graph-free conveniences for inference.

inline Tensor encode_image(const DualEncoderModel& model, const Tensor& images) {
  Graph g;
  ModelVars vars = bind_model(g, model, false, false);
  return image_embeddings(model, vars, g.constant(images)).value();
}

inline Tensor encode_text(const DualEncoderModel& model, const Tensor& tokens) {
  Graph g;
  ModelVars vars = bind_model(g, model, false, false);
  return text_embeddings(model, vars, g.constant(tokens)).value();
}

inline Tensor encode_text(const DualEncoderModel& model) { return encode_text(model, model.class_tokens()); }

inline Tensor similarity_logits(const DualEncoderModel& model, const Tensor& images) {
  Graph g;
  ModelVars vars = bind_model(g, model, false, false);
  return similarity_logits(model, vars, g.constant(images)).value();
}

/// Row-wise argmax; ties go to the lowest index.
inline Labels argmax_rows(const Tensor& scores) {
  Labels out(scores.rows());
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    auto row = scores.row(r);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
      if (row[c] > row[best]) best = c;
    out[r] = static_cast<Label>(best);
  }
  return out;
}

inline Labels predict(const DualEncoderModel& model, const Tensor& images) {
  return argmax_rows(similarity_logits(model, images));
}

/// Fraction of rows whose prediction equals the label.
inline double accuracy_of(const DualEncoderModel& model, const Tensor& inputs, const Labels& labels) {
  if (labels.empty()) throw DataError("accuracy: empty dataset");
  const Labels pred = predict(model, inputs);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += pred[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

}  // namespace hpt
