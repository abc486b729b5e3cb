#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hpt/model.hpp"
#include "hpt/tensor.hpp"

namespace hpt {

struct Dataset {
  std::string domain;
  Tensor features;  // samples x input_dim, values in [0, 1]
  Labels labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t input_dim() const { return features.cols(); }

  void validate() const {
    if (labels.empty()) throw DataError("dataset '" + domain + "' is empty");
    if (features.rank() != 2 || features.rows() != labels.size()) {
      throw DataError(detail::concat("dataset '", domain, "': ", labels.size(), " labels for features ",
                                     shape_str(features.shape())));
    }
    for (double v : features.values()) {
      if (!(v >= 0.0 && v <= 1.0)) throw DataError(detail::concat("dataset '", domain, "': feature ", v, " outside [0, 1]"));
    }
    for (Label y : labels) {
      if (y >= num_classes) throw DataError(detail::concat("dataset '", domain, "': label ", y, " >= ", num_classes));
    }
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Row subset of a dataset, in the given order.
inline Dataset subset(const Dataset& data, std::span<const std::size_t> indices) {
  Dataset out{data.domain, take_rows(data.features, indices), {}, data.num_classes};
  out.labels.reserve(indices.size());
  for (auto i : indices) out.labels.push_back(data.labels[i]);
  return out;
}

inline Dataset head(const Dataset& data, std::size_t n) {
  std::vector<std::size_t> idx(std::min(n, data.size()));
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return subset(data, idx);
}

inline Dataset concatenate(const std::vector<const Dataset*>& parts, std::string domain) {
  if (parts.empty()) throw DataError("concatenate: nothing to join");
  std::vector<double> values;
  Labels labels;
  for (const Dataset* p : parts) {
    if (p->num_classes != parts[0]->num_classes || p->input_dim() != parts[0]->input_dim()) {
      throw DataError("concatenate: datasets disagree on geometry");
    }
    values.insert(values.end(), p->features.values().begin(), p->features.values().end());
    labels.insert(labels.end(), p->labels.begin(), p->labels.end());
  }
  const std::size_t rows = labels.size();
  return Dataset{std::move(domain), Tensor({rows, parts[0]->input_dim()}, std::move(values)), std::move(labels),
                 parts[0]->num_classes};
}

/// Distribution shift applied to a downstream domain.
struct DomainShift {
  std::string name;
  double prototype_jitter = 0.0;
  double brightness_offset = 0.0;
  std::optional<std::uint64_t> pixel_permutation_seed;

  friend bool operator==(const DomainShift&, const DomainShift&) = default;
};

struct SyntheticSpec {
  std::size_t num_classes = 10;
  std::size_t side = 16;
  std::size_t train_per_class = 200;
  std::size_t test_per_class = 100;
  double noise_sigma = 0.05;
  /// Prototype pixel = base + contrast * (u - 0.5) with u ~ U(0, 1) and the
  /// base drawn once per pixel from U(0.5 - base_spread, 0.5 + base_spread).
  double base_spread = 0.0;
  double prototype_contrast = 0.05;
  std::vector<DomainShift> domains = {
      {"jitter", 0.05, 0.0, std::nullopt},
      {"brightness", 0.0, 0.1, std::nullopt},
      {"permuted", 0.0, 0.0, 7},
  };

  std::size_t input_dim() const { return side * side; }

  friend bool operator==(const SyntheticSpec&, const SyntheticSpec&) = default;
};

struct SyntheticData {
  Dataset train;
  Dataset test;
  std::vector<Dataset> downstream;
  double saturation_rate = 0.0;              // fraction of generated values that hit a clamp
};

namespace detail {

inline std::mt19937_64 stream(std::uint64_t seed, std::uint64_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag)};
  return std::mt19937_64(seq);
}

struct ClampCounter {
  std::size_t clamped = 0;
  std::size_t total = 0;
  double rate() const { return total ? static_cast<double>(clamped) / static_cast<double>(total) : 0.0; }
};

}  // namespace detail

inline Tensor make_prototypes(const SyntheticSpec& spec, std::uint64_t seed) {
  auto rng = detail::stream(seed, 0);
  std::uniform_real_distribution<double> base_dist(0.5 - spec.base_spread, 0.5 + spec.base_spread);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t d = spec.input_dim();
  std::vector<double> base(d);
  for (double& b : base) b = base_dist(rng);
  Tensor protos({spec.num_classes, d});
  for (std::size_t c = 0; c < spec.num_classes; ++c)
    for (std::size_t j = 0; j < d; ++j) protos.at(c, j) = base[j] + spec.prototype_contrast * (unit(rng) - 0.5);
  return protos;
}

inline std::vector<std::size_t> pixel_permutation(std::size_t d, std::uint64_t seed) {
  std::vector<std::size_t> perm(d);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  auto rng = detail::stream(seed, 0x9e37);
  for (std::size_t i = d; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(perm[i - 1], perm[pick(rng)]);
  }
  return perm;
}

/// Samples `per_class` points per class: shifted prototype + N(0, sigma), then
/// clamped to [0, 1] and optionally pixel-permuted. `noise` drives the sample
/// noise, `jitter` the per-domain prototype displacement. When `unclamped` is
/// given it receives the pre-clamp, pre-permutation values.
inline Dataset sample_domain(const Tensor& prototypes, const DomainShift& shift, std::size_t per_class, double sigma,
                             std::mt19937_64& noise, std::mt19937_64& jitter, detail::ClampCounter* counter = nullptr,
                             Tensor* unclamped = nullptr) {
  const std::size_t classes = prototypes.rows();
  const std::size_t d = prototypes.cols();
  Tensor protos = prototypes;
  if (shift.prototype_jitter > 0.0) {
    std::normal_distribution<double> dist(0.0, shift.prototype_jitter);
    for (double& v : protos.values()) v += dist(jitter);
  }
  std::optional<std::vector<std::size_t>> perm;
  if (shift.pixel_permutation_seed) perm = pixel_permutation(d, *shift.pixel_permutation_seed);

  const std::size_t n = per_class * classes;
  Dataset out{shift.name, Tensor({n, d}), Labels(n), classes};
  if (unclamped) *unclamped = Tensor({n, d});
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> row(d);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % classes;
    out.labels[i] = static_cast<Label>(c);
    for (std::size_t j = 0; j < d; ++j) {
      const double raw = protos.at(c, j) + shift.brightness_offset + sigma * gauss(noise);
      if (unclamped) unclamped->at(i, j) = raw;
      row[j] = std::clamp(raw, 0.0, 1.0);
      if (counter) {
        ++counter->total;
        if (row[j] != raw) ++counter->clamped;
      }
    }
    auto dst = out.features.row(i);
    for (std::size_t j = 0; j < d; ++j) dst[j] = perm ? row[(*perm)[j]] : row[j];
  }
  return out;
}

inline void validate(const SyntheticSpec& spec) {
  if (spec.num_classes < 2) throw ConfigError("synthetic: num_classes must be at least 2");
  if (spec.side == 0) throw ConfigError("synthetic: side must be positive");
  if (spec.train_per_class == 0 || spec.test_per_class == 0) throw ConfigError("synthetic: split sizes must be positive");
  if (!(spec.noise_sigma >= 0.0)) throw ConfigError("synthetic: noise_sigma must be >= 0");
  if (!(spec.base_spread >= 0.0 && spec.prototype_contrast >= 0.0 &&
        spec.base_spread + spec.prototype_contrast / 2.0 <= 0.5)) {
    throw ConfigError("synthetic: base_spread + prototype_contrast / 2 must lie in [0, 0.5]");
  }
  for (const auto& s : spec.domains) {
    if (s.name.empty()) throw ConfigError("synthetic: domain names must be non-empty");
    if (!(s.prototype_jitter >= 0.0)) throw ConfigError("synthetic: prototype_jitter must be >= 0");
    if (std::abs(s.brightness_offset) >= 0.5) throw ConfigError("synthetic: |brightness_offset| must be < 0.5");
  }
}

/// In-domain train/test splits plus one test set per downstream shift, all
/// drawn around the same class prototypes.
inline SyntheticData generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  validate(spec);
  const Tensor protos = make_prototypes(spec, seed);
  detail::ClampCounter counter;
  SyntheticData out;
  const DomainShift none{"in_domain", 0.0, 0.0, std::nullopt};
  {
    auto noise = detail::stream(seed, 1);
    auto jitter = detail::stream(seed, 2);
    out.train = sample_domain(protos, none, spec.train_per_class, spec.noise_sigma, noise, jitter, &counter);
    out.train.domain = "in_domain_train";
  }
  {
    auto noise = detail::stream(seed, 3);
    auto jitter = detail::stream(seed, 4);
    out.test = sample_domain(protos, none, spec.test_per_class, spec.noise_sigma, noise, jitter, &counter);
    out.test.domain = "in_domain_test";
  }
  for (std::size_t k = 0; k < spec.domains.size(); ++k) {
    const auto& shift = spec.domains[k];
    auto jitter = detail::stream(seed, 100 + k);
    auto noise = detail::stream(seed, 200 + k);
    out.downstream.push_back(sample_domain(protos, shift, spec.test_per_class, spec.noise_sigma, noise, jitter, &counter));
  }
  out.saturation_rate = counter.rate();
  if (out.saturation_rate > 0.5) {
    throw ConfigError(detail::concat("synthetic: ", out.saturation_rate * 100.0,
                                     "% of generated values saturate the [0, 1] clamp"));
  }
  return out;
}

}  // namespace hpt
