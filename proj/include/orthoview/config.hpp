#pragma once

#include <set>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "orthoview/dataset.hpp"
#include "orthoview/nn/models.hpp"
#include "orthoview/protocol.hpp"

// JSON forms of the configuration types. Readers start from the current
// value and overwrite only the keys present; unknown keys are an error.

namespace orthoview {

using Json = nlohmann::json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void reject_unknown(const Json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

template <class T>
void read(const Json& j, const char* key, T& field, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    field = j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

template <class E, class Parse>
void read_enum(const Json& j, const char* key, E& field, Parse parse, const std::string& where) {
  if (!j.contains(key)) return;
  if (!j.at(key).is_string()) throw ConfigError(where + "." + key + ": expected a string");
  try {
    field = parse(j.at(key).get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

}  // namespace detail

inline Json to_json(const RenderOptions& r) {
  return {{"views", r.views},
          {"resolution", r.resolution},
          {"projection", to_string(r.projection)},
          {"depth", to_string(r.depth)}};
}

inline void from_json(const Json& j, RenderOptions& r, const std::string& where = "render") {
  detail::reject_unknown(j, {"views", "resolution", "projection", "depth"}, where);
  detail::read(j, "views", r.views, where);
  detail::read(j, "resolution", r.resolution, where);
  detail::read_enum(j, "projection", r.projection, projection_from_string, where);
  detail::read_enum(j, "depth", r.depth, depth_from_string, where);
}

inline Json to_json(const nn::ModelConfig& c) {
  return {{"arch", nn::to_string(c.arch)},
          {"n_classes", c.n_classes},
          {"width_divisor", c.width_divisor},
          {"render", to_json(c.render)},
          {"fusion", nn::to_string(c.fusion)},
          {"head_hidden", c.head_hidden},
          {"point_widths", c.point_widths},
          {"point_head_hidden", c.point_head_hidden}};
}

inline void from_json(const Json& j, nn::ModelConfig& c, const std::string& where = "model") {
  detail::reject_unknown(j,
                         {"arch", "n_classes", "width_divisor", "render", "fusion", "head_hidden", "point_widths",
                          "point_head_hidden"},
                         where);
  detail::read_enum(j, "arch", c.arch, nn::arch_from_string, where);
  detail::read(j, "n_classes", c.n_classes, where);
  detail::read(j, "width_divisor", c.width_divisor, where);
  if (j.contains("render")) from_json(j.at("render"), c.render, where + ".render");
  detail::read_enum(j, "fusion", c.fusion, nn::fusion_from_string, where);
  detail::read(j, "head_hidden", c.head_hidden, where);
  detail::read(j, "point_widths", c.point_widths, where);
  detail::read(j, "point_head_hidden", c.point_head_hidden, where);
}

inline Json to_json(const AugmentSpec& a) {
  return {{"jitter", {{"enabled", a.jitter.enabled}, {"sigma", a.jitter.sigma}, {"clip", a.jitter.clip}}},
          {"rotate_y", a.rotate_y},
          {"rotate_any", a.rotate_any},
          {"scale", {{"enabled", a.scale.enabled}, {"lo", a.scale.lo}, {"hi", a.scale.hi}}},
          {"translate", {{"enabled", a.translate.enabled}, {"range", a.translate.range}}}};
}

inline void from_json(const Json& j, AugmentSpec& a, const std::string& where = "augment") {
  detail::reject_unknown(j, {"jitter", "rotate_y", "rotate_any", "scale", "translate"}, where);
  if (j.contains("jitter")) {
    const Json& s = j.at("jitter");
    detail::reject_unknown(s, {"enabled", "sigma", "clip"}, where + ".jitter");
    detail::read(s, "enabled", a.jitter.enabled, where + ".jitter");
    detail::read(s, "sigma", a.jitter.sigma, where + ".jitter");
    detail::read(s, "clip", a.jitter.clip, where + ".jitter");
  }
  detail::read(j, "rotate_y", a.rotate_y, where);
  detail::read(j, "rotate_any", a.rotate_any, where);
  if (j.contains("scale")) {
    const Json& s = j.at("scale");
    detail::reject_unknown(s, {"enabled", "lo", "hi"}, where + ".scale");
    detail::read(s, "enabled", a.scale.enabled, where + ".scale");
    detail::read(s, "lo", a.scale.lo, where + ".scale");
    detail::read(s, "hi", a.scale.hi, where + ".scale");
  }
  if (j.contains("translate")) {
    const Json& s = j.at("translate");
    detail::reject_unknown(s, {"enabled", "range"}, where + ".translate");
    detail::read(s, "enabled", a.translate.enabled, where + ".translate");
    detail::read(s, "range", a.translate.range, where + ".translate");
  }
}

inline Json to_json(const ProtocolSpec& p) {
  return {{"name", p.name},
          {"augment", to_json(p.augment)},
          {"point_strategy", to_string(p.point_strategy)},
          {"loss", to_string(p.loss)},
          {"smoothing", p.smoothing},
          {"selection", to_string(p.selection)},
          {"ensemble",
           {{"kind", to_string(p.ensemble.kind)},
            {"n_rotations", p.ensemble.n_rotations},
            {"shuffle", p.ensemble.shuffle},
            {"n_trials", p.ensemble.n_trials},
            {"n_versions", p.ensemble.n_versions}}},
          {"epochs", p.epochs},
          {"batch_size", p.batch_size},
          {"train_fraction", p.train_fraction},
          {"val_fraction", p.val_fraction},
          {"points", p.points},
          {"adam",
           {{"lr", p.adam.lr},
            {"beta1", p.adam.beta1},
            {"beta2", p.adam.beta2},
            {"eps", p.adam.eps},
            {"weight_decay", p.adam.weight_decay}}},
          {"plateau",
           {{"factor", p.plateau.factor}, {"patience", p.plateau.patience}, {"min_lr", p.plateau.min_lr}}}};
}

// A "preset" key, when present, is applied first and the remaining keys
// override it.
inline void from_json(const Json& j, ProtocolSpec& p, const std::string& where = "protocol") {
  detail::reject_unknown(j,
                         {"preset", "name", "augment", "point_strategy", "loss", "smoothing", "selection", "ensemble",
                          "epochs", "batch_size", "train_fraction", "val_fraction", "points", "adam", "plateau"},
                         where);
  if (j.contains("preset")) {
    ProtocolId id{};
    detail::read_enum(j, "preset", id, protocol_from_string, where);
    const ProtocolSpec keep = p;
    p = protocol_preset(id);
    p.epochs = keep.epochs;
    p.points = keep.points;
    p.train_fraction = keep.train_fraction;
  }
  detail::read(j, "name", p.name, where);
  if (j.contains("augment")) from_json(j.at("augment"), p.augment, where + ".augment");
  detail::read_enum(j, "point_strategy", p.point_strategy, point_strategy_from_string, where);
  detail::read_enum(j, "loss", p.loss, loss_from_string, where);
  detail::read(j, "smoothing", p.smoothing, where);
  detail::read_enum(j, "selection", p.selection, selection_from_string, where);
  if (j.contains("ensemble")) {
    const Json& e = j.at("ensemble");
    const std::string w = where + ".ensemble";
    detail::reject_unknown(e, {"kind", "n_rotations", "shuffle", "n_trials", "n_versions"}, w);
    detail::read_enum(e, "kind", p.ensemble.kind, ensemble_from_string, w);
    detail::read(e, "n_rotations", p.ensemble.n_rotations, w);
    detail::read(e, "shuffle", p.ensemble.shuffle, w);
    detail::read(e, "n_trials", p.ensemble.n_trials, w);
    detail::read(e, "n_versions", p.ensemble.n_versions, w);
  }
  detail::read(j, "epochs", p.epochs, where);
  detail::read(j, "batch_size", p.batch_size, where);
  detail::read(j, "train_fraction", p.train_fraction, where);
  detail::read(j, "val_fraction", p.val_fraction, where);
  detail::read(j, "points", p.points, where);
  if (j.contains("adam")) {
    const Json& a = j.at("adam");
    const std::string w = where + ".adam";
    detail::reject_unknown(a, {"lr", "beta1", "beta2", "eps", "weight_decay"}, w);
    detail::read(a, "lr", p.adam.lr, w);
    detail::read(a, "beta1", p.adam.beta1, w);
    detail::read(a, "beta2", p.adam.beta2, w);
    detail::read(a, "eps", p.adam.eps, w);
    detail::read(a, "weight_decay", p.adam.weight_decay, w);
  }
  if (j.contains("plateau")) {
    const Json& s = j.at("plateau");
    const std::string w = where + ".plateau";
    detail::reject_unknown(s, {"factor", "patience", "min_lr"}, w);
    detail::read(s, "factor", p.plateau.factor, w);
    detail::read(s, "patience", p.plateau.patience, w);
    detail::read(s, "min_lr", p.plateau.min_lr, w);
  }
}

}  // namespace orthoview
