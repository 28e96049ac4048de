#include "au2av/app/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include <json.hpp>

#include "au2av/error.hpp"
#include "au2av/hash.hpp"

namespace au2av::app {

namespace {

using nlohmann::json;

// The same field list drives reading and writing, so the two cannot drift.
struct Writer {
  json& j;
  template <class T>
  void operator()(const char* key, T& value) {
    if constexpr (std::is_same_v<T, std::filesystem::path>)
      j[key] = value.generic_string();
    else
      j[key] = value;
  }
  template <class F>
  void section(const char* key, F&& fill) {
    json sub = json::object();
    Writer w{sub};
    fill(w);
    j[key] = sub;
  }
};

struct Reader {
  const json& j;
  std::string where;
  std::filesystem::path base;
  std::set<std::string> known{};

  Reader(const json& obj, std::string path, std::filesystem::path base_dir)
      : j(obj), where(std::move(path)), base(std::move(base_dir)) {
    if (!j.is_object()) throw ValidationError("config: " + label() + " must be an object");
  }

  std::string label() const { return where.empty() ? "top level" : where; }
  std::string child(const char* key) const { return where.empty() ? key : where + "." + key; }

  template <class T>
  void operator()(const char* key, T& value) {
    known.insert(key);
    const auto it = j.find(key);
    if (it == j.end()) return;
    try {
      if constexpr (std::is_same_v<T, std::filesystem::path>) {
        value = std::filesystem::path(it->template get<std::string>());
        if (value.is_relative() && !base.empty()) value = base / value;
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ValidationError("config: " + child(key) + " must be true or false");
        value = it->template get<bool>();
      } else if constexpr (std::is_same_v<T, unsigned>) {
        if (!it->is_number_unsigned()) throw ValidationError("config: " + child(key) + " must be a non-negative integer");
        value = it->template get<unsigned>();
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) throw ValidationError("config: " + child(key) + " must be an integer");
        value = it->template get<T>();
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw ValidationError("config: " + child(key) + " must be a number");
        value = it->template get<T>();
      } else {
        value = it->template get<T>();
      }
    } catch (const json::exception&) {
      throw ValidationError("config: " + child(key) + " has the wrong type");
    }
  }

  template <class F>
  void section(const char* key, F&& fill) {
    known.insert(key);
    const auto it = j.find(key);
    if (it == j.end()) return;
    Reader sub(*it, child(key), base);
    fill(sub);
    sub.finish();
  }

  void finish() const {
    for (const auto& item : j.items())
      if (!known.count(item.key())) throw ValidationError("config: unknown key '" + child(item.key().c_str()) + "'");
  }
};

template <class V>
void visit(V& v, PipelineConfig& c) {
  v("seed", c.seed);
  v("adapt_epochs", c.adapt_epochs);
  v.section("paths", [&](auto& p) {
    p("human", c.paths.human);
    p("target", c.paths.target);
    p("out", c.paths.out);
  });
  v.section("providers", [&](auto& p) {
    p("pose", c.providers.pose);
    p("landmarks", c.providers.landmarks);
    p("perceptual", c.providers.perceptual);
    p("embedding", c.providers.embedding);
    p("lip_reader", c.providers.lip_reader);
  });
  auto& s1 = c.stage1;
  v.section("stage1", [&](auto& s) {
    s.section("arch", [&](auto& a) {
      a("resolution", s1.arch.resolution);
      a("embedding_dim", s1.arch.embedding_dim);
      a("encoder_channels", s1.arch.encoder_channels);
      a("encoder_hidden", s1.arch.encoder_hidden);
      a("generator_width", s1.arch.generator_width);
      a("generator_min_width", s1.arch.generator_min_width);
      a("modulation_hidden", s1.arch.modulation_hidden);
      a("disc_width", s1.arch.disc_width);
      a("temporal_window", s1.arch.temporal_window);
      a("sync_resolution", s1.arch.sync_resolution);
      a("sync_width", s1.arch.sync_width);
      a("sync_dim", s1.arch.sync_dim);
      a("landmark_width", s1.arch.landmark_width);
    });
    s.section("weights", [&](auto& w) {
      w("feature_matching", s1.weights.feature_matching);
      w("perceptual", s1.weights.perceptual);
      w("contrastive", s1.weights.contrastive);
      w("blink", s1.weights.blink);
      w("margin", s1.weights.margin);
      w("reconstruction", s1.weights.reconstruction);
    });
    s.section("optimizer", [&](auto& o) {
      o("learning_rate", s1.optimizer.learning_rate);
      o("beta1", s1.optimizer.beta1);
      o("beta2", s1.optimizer.beta2);
      o("constant_epochs", s1.optimizer.constant_epochs);
      o("decay_epochs", s1.optimizer.decay_epochs);
    });
    s.section("stabilization", [&](auto& o) {
      o("relative_epsilon", s1.stabilization.relative_epsilon);
      o("patience", s1.stabilization.patience);
    });
    s("epochs", s1.epochs);
    s("phase_override", s1.phase_override);
    s("window_stride", s1.window_stride);
    s("steps_per_epoch", s1.steps_per_epoch);
    s("sync_pretrain_steps", s1.sync_pretrain_steps);
    s("sync_adversarial", s1.sync_adversarial);
  });
  auto& s2 = c.stage2;
  v.section("stage2", [&](auto& s) {
    s.section("arch", [&](auto& a) {
      a("resolution", s2.arch.resolution);
      a("generator_width", s2.arch.generator_width);
      a("downsampling", s2.arch.downsampling);
      a("residual_blocks", s2.arch.residual_blocks);
      a("disc_width", s2.arch.disc_width);
      a("local_depth", s2.arch.local_depth);
      a("global_depth", s2.arch.global_depth);
      a("predictor_width", s2.arch.predictor_width);
      a("past_frames", s2.arch.past_frames);
      a("landmark_width", s2.arch.landmark_width);
    });
    s.section("weights", [&](auto& w) {
      w("cam", s2.weights.cam);
      w("recycle", s2.weights.recycle);
      w("identity", s2.weights.identity);
      w("lip", s2.weights.lip);
      w("blink", s2.weights.blink);
    });
    s.section("optimizer", [&](auto& o) {
      o("learning_rate", s2.adam.learning_rate);
      o("beta1", s2.adam.beta1);
      o("beta2", s2.adam.beta2);
      o("epsilon", s2.adam.epsilon);
    });
    s("epochs", s2.epochs);
    s("steps_per_epoch", s2.steps_per_epoch);
    s("literal_identity", s2.literal_identity);
  });
}

}  // namespace

void ProviderRegistry::validate() const {
  auto check = [](const std::string& slot, const std::string& value, std::initializer_list<const char*> allowed) {
    for (const char* a : allowed)
      if (value == a) return;
    std::string list;
    for (const char* a : allowed) list += (list.empty() ? "" : ", ") + std::string(a);
    throw ValidationError("config: provider " + slot + " '" + value + "' is not one of: " + list);
  };
  check("pose", pose, {"sidecar", "none"});
  check("landmarks", landmarks, {"sidecar", "none"});
  check("perceptual", perceptual, {"random-conv3", "identity"});
  check("embedding", embedding, {"random-conv-gap", "none"});
  check("lip_reader", lip_reader, {"transcript", "none"});
}

void PipelineConfig::validate() {
  stage1.seed = seed;
  stage2.seed = seed;
  if (adapt_epochs < 0) throw ValidationError("config: adapt_epochs must be >= 0");
  providers.validate();
  stage1.validate();
  stage2.validate();
  if (paths.out.empty()) throw ValidationError("config: paths.out must be set");
}

std::string PipelineConfig::to_json() const {
  json j = json::object();
  Writer w{j};
  PipelineConfig copy = *this;
  visit(w, copy);
  return j.dump(2) + "\n";
}

std::string PipelineConfig::hash() const {
  // Output paths do not change what is computed.
  PipelineConfig copy = *this;
  copy.paths = {};
  json j = json::object();
  Writer w{j};
  visit(w, copy);
  return fnv1a_hex(j.dump());
}

PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config: malformed JSON: ") + e.what());
  }
  PipelineConfig c;
  Reader r(j, "", base_dir);
  visit(r, c);
  r.finish();
  c.validate();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot read config " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), file.parent_path());
}

PipelineConfig toy_config() {
  PipelineConfig c;
  auto& a = c.stage1.arch;
  a.resolution = 32;
  a.embedding_dim = 16;
  a.encoder_channels = 4;
  a.encoder_hidden = 8;
  a.generator_width = 16;
  a.generator_min_width = 8;
  a.modulation_hidden = 8;
  a.disc_width = 8;
  a.sync_resolution = 32;
  a.sync_width = 4;
  a.sync_dim = 16;
  a.landmark_width = 4;
  c.stage1.epochs = 2;
  c.stage1.sync_pretrain_steps = 5;
  c.stage1.steps_per_epoch = 4;

  auto& b = c.stage2.arch;
  b.resolution = 32;
  b.generator_width = 4;
  b.residual_blocks = 2;
  b.disc_width = 4;
  b.global_depth = 3;
  b.predictor_width = 4;
  b.landmark_width = 4;
  c.stage2.adam.learning_rate = 1e-3;
  c.stage2.epochs = 2;
  c.stage2.steps_per_epoch = 4;
  c.paths = {"data/human", "data/anime", "run"};
  c.validate();
  return c;
}

std::shared_ptr<const FeatureProvider> make_feature_provider(const ProviderRegistry& r) {
  if (r.perceptual == "identity") return std::make_shared<IdentityFeatureProvider>();
  return std::make_shared<RandomConvFeatureProvider>();
}

std::unique_ptr<EmbeddingProvider> make_embedding_provider(const ProviderRegistry& r) {
  if (r.embedding == "none") return nullptr;
  return std::make_unique<ConvEmbeddingProvider>();
}

}  // namespace au2av::app
