#pragma once

// JSON file formats: blendshape model, animation cache, weight track, solve
// configuration, post-processing parameters, phoneme alignment, metric report
// and emotion records. Numbers are written in shortest round-trip decimal
// form, so a value read back is bit-identical to the value written.

#include <charconv>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "facekit/emotion.hpp"
#include "facekit/error.hpp"
#include "facekit/metrics.hpp"
#include "facekit/model.hpp"
#include "facekit/postprocess.hpp"
#include "facekit/solver.hpp"

namespace facekit::io {

using json = nlohmann::json;

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw parse_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw parse_error("cannot write '" + path + "'");
  out << text;
  if (!out) throw parse_error("failed writing '" + path + "'");
}

inline json parse_json(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw parse_error(origin + ": " + e.what());
  }
}

inline json read_json_file(const std::string& path) { return parse_json(read_text_file(path), path); }

inline std::string dump(const json& j) { return j.dump(1) + "\n"; }

/// Locale-independent shortest round-trip decimal.
inline std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace detail {

// Runs a JSON access block, turning nlohmann type/key errors into parse errors.
template <class F>
auto guarded(const std::string& origin, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw parse_error(origin + ": " + e.what());
  }
}

inline void reject_unknown_keys(const json& j, const std::set<std::string>& known, const std::string& origin) {
  if (!j.is_object()) throw parse_error(origin + ": expected a JSON object");
  for (const auto& item : j.items()) {
    if (!known.count(item.key())) throw parse_error(origin + ": unknown field '" + item.key() + "'");
  }
}

inline Vector to_vector(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline json from_vector(const Eigen::Ref<const Vector>& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

inline std::vector<IndexPair> to_pairs(const json& j) {
  std::vector<IndexPair> out;
  for (const auto& p : j) {
    if (!p.is_array() || p.size() != 2) throw parse_error("index pair must have exactly two entries");
    out.emplace_back(p[0].get<std::size_t>(), p[1].get<std::size_t>());
  }
  return out;
}

inline json from_pairs(const std::vector<IndexPair>& pairs) {
  json out = json::array();
  for (const auto& [a, b] : pairs) out.push_back({a, b});
  return out;
}

template <class T>
void read_optional(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

/// A model file: the blendshape model plus optional annotations used by the
/// solver (vertex sampling) and the metrics (lips, mouth region, features).
struct ModelFile {
  BlendshapeModel model;
  std::optional<VertexSelector> selector;
  std::optional<LipVertexPairs> lips;
  std::optional<VertexSelector> mouth_region;
  std::vector<ExpressionFeature> features;
};

inline ModelFile model_from_json(const json& j, const std::string& origin = "model") {
  return detail::guarded(origin, [&] {
    ModelFile out;
    const auto v = j.at("vertex_count").get<std::size_t>();
    const Vector neutral = detail::to_vector(j.at("neutral"));
    expect_size(3 * v, static_cast<std::size_t>(neutral.size()), origin + ": neutral coordinate count");

    ModelData data;
    data.neutral = Mesh(neutral);
    const auto& shapes = j.at("shapes");
    data.deltas.resize(static_cast<Eigen::Index>(3 * v), static_cast<Eigen::Index>(shapes.size()));
    for (std::size_t i = 0; i < shapes.size(); ++i) {
      const Vector d = detail::to_vector(shapes[i].at("delta"));
      expect_size(3 * v, static_cast<std::size_t>(d.size()),
                  origin + ": shape " + std::to_string(i) + " delta length");
      data.deltas.col(static_cast<Eigen::Index>(i)) = d;
      data.shape_names.push_back(shapes[i].value("name", "shape" + std::to_string(i)));
    }
    if (j.contains("active_set")) data.active_set = j.at("active_set").get<std::vector<std::size_t>>();
    if (j.contains("cancel_pairs")) data.cancel_pairs = detail::to_pairs(j.at("cancel_pairs"));
    if (j.contains("symmetry_pairs")) data.symmetry_pairs = detail::to_pairs(j.at("symmetry_pairs"));
    detail::read_optional(j, "jaw_shapes", data.jaw_shapes);
    detail::read_optional(j, "jaw_reference_vertex", data.jaw_reference_vertex);
    out.model = BlendshapeModel(std::move(data));

    if (j.contains("selector")) {
      const auto& s = j.at("selector");
      std::optional<std::vector<double>> weights;
      if (s.contains("weights")) weights = s.at("weights").get<std::vector<double>>();
      out.selector = VertexSelector(s.at("indices").get<std::vector<std::size_t>>(), std::move(weights));
      out.selector->check_bounds(v);
    }
    if (j.contains("lip_pairs")) {
      LipVertexPairs lips;
      lips.pairs = detail::to_pairs(j.at("lip_pairs"));
      lips.central = j.value("central_lip_pair", lips.pairs.size() / 2);
      lips.closure_threshold = j.value("closure_threshold", 1.0);
      lips.validate(v);
      out.lips = std::move(lips);
    }
    if (j.contains("mouth_vertices")) {
      out.mouth_region = VertexSelector(j.at("mouth_vertices").get<std::vector<std::size_t>>());
      out.mouth_region->check_bounds(v);
    }
    if (j.contains("features")) {
      for (const auto& f : j.at("features")) {
        ExpressionFeature feat;
        feat.name = f.at("name").get<std::string>();
        const auto kind = f.at("kind").get<std::string>();
        if (kind == "distance") {
          feat.kind = ExpressionFeature::Kind::distance;
        } else if (kind == "region") {
          feat.kind = ExpressionFeature::Kind::region;
        } else {
          throw parse_error(origin + ": feature '" + feat.name + "' has unknown kind '" + kind + "'");
        }
        feat.vertices = f.at("vertices").get<std::vector<std::size_t>>();
        feat.range = f.at("range").get<double>();
        feat.validate(v);
        out.features.push_back(std::move(feat));
      }
    }
    return out;
  });
}

inline json model_to_json(const ModelFile& file) {
  const auto& m = file.model;
  json j;
  j["vertex_count"] = m.vertex_count();
  j["neutral"] = detail::from_vector(m.neutral().positions());
  json shapes = json::array();
  for (std::size_t i = 0; i < m.shape_count(); ++i) {
    shapes.push_back({{"name", m.shape_names()[i]},
                      {"delta", detail::from_vector(m.deltas().col(static_cast<Eigen::Index>(i)))}});
  }
  j["shapes"] = std::move(shapes);
  j["active_set"] = m.active_set();
  j["cancel_pairs"] = detail::from_pairs(m.cancel_pairs());
  j["symmetry_pairs"] = detail::from_pairs(m.symmetry_pairs());
  j["jaw_shapes"] = m.jaw_shapes();
  j["jaw_reference_vertex"] = m.jaw_reference_vertex();
  if (file.selector) {
    j["selector"]["indices"] = file.selector->indices();
    if (file.selector->weights()) j["selector"]["weights"] = *file.selector->weights();
  }
  if (file.lips) {
    j["lip_pairs"] = detail::from_pairs(file.lips->pairs);
    j["central_lip_pair"] = file.lips->central;
    j["closure_threshold"] = file.lips->closure_threshold;
  }
  if (file.mouth_region) j["mouth_vertices"] = file.mouth_region->indices();
  if (!file.features.empty()) {
    json feats = json::array();
    for (const auto& f : file.features) {
      feats.push_back({{"name", f.name},
                       {"kind", f.kind == ExpressionFeature::Kind::distance ? "distance" : "region"},
                       {"vertices", f.vertices},
                       {"range", f.range}});
    }
    j["features"] = std::move(feats);
  }
  return j;
}

inline FaceChannels channels_from_json(const json& j, double frame_rate) {
  FaceChannels c;
  c.frame_rate = frame_rate;
  if (j.contains("jaw_neutral")) c.jaw_neutral = detail::to_vector(j.at("jaw_neutral"));
  if (j.contains("jaw")) {
    for (const auto& f : j.at("jaw")) c.jaw.push_back(detail::to_vector(f));
  }
  if (j.contains("tongue")) {
    for (const auto& f : j.at("tongue")) c.tongue.push_back(detail::to_vector(f));
  }
  if (j.contains("eye_rotation")) {
    for (const auto& f : j.at("eye_rotation")) {
      const auto v = f.get<std::vector<double>>();
      if (v.size() != 4) throw shape_error("channels: eye_rotation frames need 4 values");
      c.eye_rotation.emplace_back(v[0], v[1], v[2], v[3]);
    }
  }
  detail::read_optional(j, "eyelid", c.eyelid);
  detail::read_optional(j, "lip_open", c.lip_open);
  c.validate();
  return c;
}

inline json channels_to_json(const FaceChannels& c) {
  json j = json::object();
  if (!c.jaw.empty()) {
    j["jaw_neutral"] = detail::from_vector(c.jaw_neutral);
    j["jaw"] = json::array();
    for (const auto& f : c.jaw) j["jaw"].push_back(detail::from_vector(f));
  }
  if (!c.tongue.empty()) {
    j["tongue"] = json::array();
    for (const auto& f : c.tongue) j["tongue"].push_back(detail::from_vector(f));
  }
  if (!c.eye_rotation.empty()) {
    j["eye_rotation"] = json::array();
    for (const auto& e : c.eye_rotation) j["eye_rotation"].push_back({e[0], e[1], e[2], e[3]});
  }
  if (!c.eyelid.empty()) j["eyelid"] = c.eyelid;
  if (!c.lip_open.empty()) j["lip_open"] = c.lip_open;
  return j;
}

struct AnimationFile {
  AnimationSequence animation;
  std::optional<FaceChannels> channels;
};

inline AnimationFile animation_from_json(const json& j, const std::string& origin = "animation") {
  return detail::guarded(origin, [&] {
    AnimationFile out;
    const double rate = j.at("frame_rate").get<double>();
    const bool is_delta = j.at("is_delta").get<bool>();
    std::vector<Vector> frames;
    for (const auto& f : j.at("frames")) frames.push_back(detail::to_vector(f));
    out.animation = AnimationSequence(rate, std::move(frames), is_delta);
    if (j.contains("channels")) out.channels = channels_from_json(j.at("channels"), rate);
    return out;
  });
}

inline json animation_to_json(const AnimationSequence& a, const std::optional<FaceChannels>& channels = std::nullopt) {
  json j;
  j["frame_rate"] = a.frame_rate();
  j["is_delta"] = a.is_delta();
  j["frames"] = json::array();
  for (const auto& f : a.frames()) j["frames"].push_back(detail::from_vector(f));
  if (channels) j["channels"] = channels_to_json(*channels);
  return j;
}

inline json report_to_json(const SolveReport& r) {
  return {{"iterations", r.iterations}, {"kkt_residual", r.kkt_residual}, {"converged", r.converged}};
}

inline json weight_track_to_json(const WeightTrack& track, const std::vector<std::string>& names,
                                 const std::vector<SolveReport>& reports = {}) {
  json j;
  j["frame_rate"] = track.frame_rate();
  j["shape_names"] = names;
  j["weights"] = json::array();
  for (const auto& w : track.weights()) j["weights"].push_back(detail::from_vector(w));
  if (!reports.empty()) {
    j["solve_reports"] = json::array();
    for (const auto& r : reports) j["solve_reports"].push_back(report_to_json(r));
  }
  return j;
}

inline WeightTrack weight_track_from_json(const json& j, const std::string& origin = "weights") {
  return detail::guarded(origin, [&] {
    std::vector<Vector> w;
    for (const auto& f : j.at("weights")) w.push_back(detail::to_vector(f));
    return WeightTrack(j.value("frame_rate", 30.0), std::move(w));
  });
}

/// Solve settings as stored in a config file; CLI-only options sit beside
/// the solver configuration.
struct SolveFileConfig {
  SolveConfig solver;
  bool use_jaw_constraint = false;
  std::optional<std::string> warm_start;
};

inline SolveFileConfig solve_config_from_json(const json& j, const std::string& origin = "config") {
  return detail::guarded(origin, [&] {
    detail::reject_unknown_keys(j,
                                {"lambda_l2", "lambda_l1", "lambda_temporal", "lambda_sym", "lambda_jaw_base",
                                 "jaw_sigma", "kkt_tolerance", "max_iterations", "temporal_in_first_pass",
                                 "use_jaw_constraint", "warm_start"},
                                origin);
    SolveFileConfig c;
    auto& s = c.solver;
    detail::read_optional(j, "lambda_l2", s.lambda_l2);
    detail::read_optional(j, "lambda_l1", s.lambda_l1);
    detail::read_optional(j, "lambda_temporal", s.lambda_temporal);
    detail::read_optional(j, "lambda_sym", s.lambda_sym);
    detail::read_optional(j, "lambda_jaw_base", s.lambda_jaw_base);
    detail::read_optional(j, "jaw_sigma", s.jaw_sigma);
    detail::read_optional(j, "kkt_tolerance", s.kkt_tolerance);
    if (j.contains("max_iterations")) s.max_iterations = j.at("max_iterations").get<std::size_t>();
    detail::read_optional(j, "temporal_in_first_pass", s.temporal_in_first_pass);
    detail::read_optional(j, "use_jaw_constraint", c.use_jaw_constraint);
    if (j.contains("warm_start")) c.warm_start = j.at("warm_start").get<std::string>();
    s.validate();
    return c;
  });
}

inline json solve_config_to_json(const SolveFileConfig& c) {
  const auto& s = c.solver;
  json j = {{"lambda_l2", s.lambda_l2},
            {"lambda_l1", s.lambda_l1},
            {"lambda_temporal", s.lambda_temporal},
            {"lambda_sym", s.lambda_sym},
            {"lambda_jaw_base", s.lambda_jaw_base},
            {"jaw_sigma", s.jaw_sigma},
            {"kkt_tolerance", s.kkt_tolerance},
            {"temporal_in_first_pass", s.temporal_in_first_pass},
            {"use_jaw_constraint", c.use_jaw_constraint}};
  if (s.max_iterations) j["max_iterations"] = *s.max_iterations;
  if (c.warm_start) j["warm_start"] = *c.warm_start;
  return j;
}

inline PostProcessParams params_from_json(const json& j, const std::string& origin = "params") {
  return detail::guarded(origin, [&] {
    detail::reject_unknown_keys(
        j,
        {"skin_strength", "upper_face_strength", "lower_face_strength", "upper_face_smoothing",
         "lower_face_smoothing", "face_mask_level", "face_mask_softness", "lip_open_offset", "jaw_strength",
         "jaw_height", "jaw_depth", "tongue_strength", "tongue_height", "tongue_depth", "eyelid_offset",
         "blink_strength", "eye_saccade_strength", "eye_offset_strength", "eye_rotation_offset_x",
         "eye_rotation_offset_y"},
        origin);
    PostProcessParams p;
    detail::read_optional(j, "skin_strength", p.skin_strength);
    detail::read_optional(j, "upper_face_strength", p.upper_face_strength);
    detail::read_optional(j, "lower_face_strength", p.lower_face_strength);
    detail::read_optional(j, "upper_face_smoothing", p.upper_face_smoothing);
    detail::read_optional(j, "lower_face_smoothing", p.lower_face_smoothing);
    detail::read_optional(j, "face_mask_level", p.face_mask_level);
    detail::read_optional(j, "face_mask_softness", p.face_mask_softness);
    detail::read_optional(j, "lip_open_offset", p.lip_open_offset);
    detail::read_optional(j, "jaw_strength", p.jaw_strength);
    detail::read_optional(j, "jaw_height", p.jaw_height);
    detail::read_optional(j, "jaw_depth", p.jaw_depth);
    detail::read_optional(j, "tongue_strength", p.tongue_strength);
    detail::read_optional(j, "tongue_height", p.tongue_height);
    detail::read_optional(j, "tongue_depth", p.tongue_depth);
    detail::read_optional(j, "eyelid_offset", p.eyelid_offset);
    detail::read_optional(j, "blink_strength", p.blink_strength);
    detail::read_optional(j, "eye_saccade_strength", p.eye_saccade_strength);
    detail::read_optional(j, "eye_offset_strength", p.eye_offset_strength);
    detail::read_optional(j, "eye_rotation_offset_x", p.eye_rotation_offset_x);
    detail::read_optional(j, "eye_rotation_offset_y", p.eye_rotation_offset_y);
    p.validate();
    return p;
  });
}

inline json params_to_json(const PostProcessParams& p) {
  return {{"skin_strength", p.skin_strength},
          {"upper_face_strength", p.upper_face_strength},
          {"lower_face_strength", p.lower_face_strength},
          {"upper_face_smoothing", p.upper_face_smoothing},
          {"lower_face_smoothing", p.lower_face_smoothing},
          {"face_mask_level", p.face_mask_level},
          {"face_mask_softness", p.face_mask_softness},
          {"lip_open_offset", p.lip_open_offset},
          {"jaw_strength", p.jaw_strength},
          {"jaw_height", p.jaw_height},
          {"jaw_depth", p.jaw_depth},
          {"tongue_strength", p.tongue_strength},
          {"tongue_height", p.tongue_height},
          {"tongue_depth", p.tongue_depth},
          {"eyelid_offset", p.eyelid_offset},
          {"blink_strength", p.blink_strength},
          {"eye_saccade_strength", p.eye_saccade_strength},
          {"eye_offset_strength", p.eye_offset_strength},
          {"eye_rotation_offset_x", p.eye_rotation_offset_x},
          {"eye_rotation_offset_y", p.eye_rotation_offset_y}};
}

inline std::vector<PhonemeInterval> alignment_from_json(const json& j, const std::string& origin = "alignment") {
  return detail::guarded(origin, [&] {
    const json& list = j.is_object() ? j.at("intervals") : j;
    std::vector<PhonemeInterval> out;
    for (const auto& r : list) {
      PhonemeInterval iv{r.at("label").get<std::string>(), r.at("start").get<double>(), r.at("end").get<double>()};
      if (!(iv.start < iv.end)) {
        throw parse_error(origin + ": interval '" + iv.label + "' has start >= end");
      }
      out.push_back(std::move(iv));
    }
    return out;
  });
}

inline json alignment_to_json(const std::vector<PhonemeInterval>& intervals) {
  json j = json::array();
  for (const auto& iv : intervals) j.push_back({{"label", iv.label}, {"start", iv.start}, {"end", iv.end}});
  return j;
}

inline json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline json metric_report_to_json(const MetricReport& r, const std::optional<BilabialResult>& bilabial = std::nullopt) {
  json j = {{"fourier_jitter", r.fourier_jitter},
            {"frechet_distance", optional_number(r.frechet_distance)},
            {"bilabial_score", optional_number(r.bilabial_score)},
            {"expressiveness", optional_number(r.expressiveness)}};
  if (bilabial) {
    json inst = json::array();
    for (const auto& d : bilabial->detail) {
      json e = {{"label", d.interval.label}, {"start", d.interval.start}, {"end", d.interval.end}, {"valid", d.valid}};
      if (d.valid) {
        e["min_gap"] = d.min_gap;
        e["success"] = d.success;
      }
      inst.push_back(std::move(e));
    }
    j["bilabial_instances"] = std::move(inst);
    j["warnings"] = bilabial->warnings;
  }
  return j;
}

inline EmotionProbs probs_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != kEmotionCount) {
    throw shape_error("emotion: expected " + std::to_string(kEmotionCount) + " probabilities, got " +
                      std::to_string(v.size()));
  }
  EmotionProbs::Array a{};
  std::copy(v.begin(), v.end(), a.begin());
  return EmotionProbs(a);
}

inline json probs_to_json(const EmotionProbs& p) {
  return json(std::vector<double>(p.values().begin(), p.values().end()));
}

/// Emotion-probability input: keyframes addressed by time, or classifier
/// output addressed by (window, sub_window) index.
struct EmotionInput {
  std::optional<double> duration;
  std::vector<EmotionKeyframe> timed;
  std::vector<EmotionRecord> windowed;
};

inline EmotionKeyframe timed_record_from_json(const json& r) {
  return {r.at("time").get<double>(), probs_from_json(r.at("probs"))};
}

inline json timed_record_to_json(double time, const EmotionProbs& p) {
  return {{"time", time}, {"probs", probs_to_json(p)}};
}

inline EmotionInput emotion_input_from_json(const json& j, const std::string& origin = "emotion") {
  return detail::guarded(origin, [&] {
    EmotionInput in;
    const json& list = j.is_object() ? j.at("records") : j;
    if (j.is_object() && j.contains("duration")) in.duration = j.at("duration").get<double>();
    for (const auto& r : list) {
      if (r.contains("time")) {
        in.timed.push_back(timed_record_from_json(r));
      } else if (r.contains("window")) {
        in.windowed.push_back({r.at("window").get<std::size_t>(), r.value("sub_window", std::size_t{0}),
                               probs_from_json(r.at("probs"))});
      } else {
        throw parse_error(origin + ": record needs either 'time' or 'window'");
      }
    }
    if (!in.timed.empty() && !in.windowed.empty()) {
      throw parse_error(origin + ": mixes time-addressed and window-addressed records");
    }
    if (in.timed.empty() && in.windowed.empty()) throw parse_error(origin + ": no records");
    return in;
  });
}

inline json emotion_records_to_json(double duration, const std::vector<EmotionRecord>& records) {
  json list = json::array();
  for (const auto& r : records) {
    list.push_back({{"window", r.window}, {"sub_window", r.sub_window}, {"probs", probs_to_json(r.probs)}});
  }
  return {{"duration", duration}, {"records", std::move(list)}};
}

inline json emotion_track_to_json(const EmotionTrack& track) {
  json j = json::array();
  for (const auto& k : track.keyframes()) j.push_back(timed_record_to_json(k.time, k.probs));
  return j;
}

struct EmotionFileConfig {
  WindowConfig windows;
  double online_smoothing = 0.6;
  std::optional<double> duration;  // s; overrides the input's duration
};

inline EmotionFileConfig emotion_config_from_json(const json& j, const std::string& origin = "config") {
  return detail::guarded(origin, [&] {
    detail::reject_unknown_keys(j, {"window_size", "stride", "sub_window", "sub_stride", "online_smoothing", "duration"},
                                origin);
    EmotionFileConfig c;
    detail::read_optional(j, "window_size", c.windows.window_size);
    detail::read_optional(j, "stride", c.windows.stride);
    detail::read_optional(j, "sub_window", c.windows.sub_window);
    detail::read_optional(j, "sub_stride", c.windows.sub_stride);
    detail::read_optional(j, "online_smoothing", c.online_smoothing);
    if (j.contains("duration")) c.duration = j.at("duration").get<double>();
    c.windows.validate();
    if (!(c.online_smoothing >= 0.0 && c.online_smoothing < 1.0)) {
      throw invalid_error(origin + ": online_smoothing must lie in [0, 1)");
    }
    return c;
  });
}

/// CSV with a header row, "." decimals and "\n" line endings.
inline std::string lip_gap_csv(const std::vector<LipGaps>& gaps, double frame_rate) {
  std::string out = "frame,time,central_gap";
  const std::size_t pairs = gaps.empty() ? 0 : gaps.front().per_pair.size();
  for (std::size_t k = 0; k < pairs; ++k) out += ",gap_" + std::to_string(k);
  out += "\n";
  for (std::size_t t = 0; t < gaps.size(); ++t) {
    out += std::to_string(t) + "," + format_number(static_cast<double>(t) / frame_rate) + "," +
           format_number(gaps[t].central);
    for (double g : gaps[t].per_pair) out += "," + format_number(g);
    out += "\n";
  }
  return out;
}

}  // namespace facekit::io
