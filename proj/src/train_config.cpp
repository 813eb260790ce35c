#include "maskseg/train_config.hpp"

#include <cstdio>
#include <functional>
#include <stdexcept>
#include <variant>

namespace maskseg {

using json = nlohmann::json;

namespace {

struct Choice {
  std::function<int()> get;
  std::function<void(int)> set;
  std::vector<std::string> names;
};

using FieldRef = std::variant<int*, double*, bool*, std::uint64_t*, std::string*, Choice>;

struct Field {
  const char* key;
  FieldRef ref;
};

template <typename E>
Choice choice(E& e, std::vector<std::string> names) {
  return {[&e] { return static_cast<int>(e); }, [&e](int v) { e = static_cast<E>(v); }, std::move(names)};
}

std::vector<Field> fields(TrainConfig& c) {
  return {
      {"net.enc_hidden", &c.net.enc_hidden},
      {"net.enc_dim", &c.net.enc_dim},
      {"net.dec_dim", &c.net.dec_dim},
      {"net.feat_dim", &c.net.feat_dim},
      {"net.head_kernel", &c.net.head_kernel},
      {"net.num_classes", &c.net.num_classes},
      {"net.trunk_bias", &c.net.trunk_bias},
      {"loss.lambda_u", &c.weights.lambda_u},
      {"loss.lambda_mp", &c.weights.lambda_mp},
      {"loss.lambda_mf", &c.weights.lambda_mf},
      {"loss.lambda_ms", &c.weights.lambda_ms},
      {"loss.unlabeled", &c.toggles.unlabeled},
      {"loss.mimpi", &c.toggles.pixel},
      {"loss.mimfea", &c.toggles.feature},
      {"loss.mimse", &c.toggles.semantic},
      {"loss.psi", &c.psi},
      {"loss.tau", &c.tau},
      {"loss.alpha", &c.alpha},
      {"loss.gate_reduction", choice(c.gate_reduction, {"gated_mean", "all_mean"})},
      {"loss.semantic", choice(c.semantic_loss, {"ce", "mse"})},
      {"loss.semantic_gated", &c.semantic_gated},
      {"loss.classwise", &c.classwise},
      {"loss.use_memory", &c.use_memory},
      {"loss.use_confidence", &c.use_confidence},
      {"loss.detach_fp_target", &c.detach_fp_target},
      {"mask.patch", &c.mask.patch},
      {"mask.ratio", &c.mask.ratio},
      {"perturb.feature_drop", &c.feature_drop},
      {"perturb.flip_prob", &c.weak.flip_prob},
      {"perturb.max_pad", &c.weak.max_pad},
      {"perturb.brightness", &c.strong.brightness},
      {"perturb.contrast", &c.strong.contrast},
      {"perturb.noise_std", &c.strong.noise_std},
      {"perturb.channel_shuffle", &c.strong.channel_shuffle_prob},
      {"optim.lr", &c.lr},
      {"optim.lr_pixel", &c.lr_pixel},
      {"optim.poly_power", &c.poly_power},
      {"optim.momentum", &c.momentum},
      {"optim.weight_decay", &c.weight_decay},
      {"train.iterations", &c.iterations},
      {"train.batch", &c.batch},
      {"train.eval_interval", &c.eval_interval},
      {"train.checkpoint_interval", &c.checkpoint_interval},
      {"train.shared_batch", &c.shared_batch},
      {"seed.model", &c.seed_model},
      {"seed.data", &c.seed_data},
      {"seed.mask", &c.seed_mask},
      {"data.corpus", &c.corpus},
      {"data.split", &c.split},
      {"data.eval_corpus", &c.eval_corpus},
      {"data.n_labeled", &c.n_labeled},
      {"data.synth_hw", &c.synth_hw},
      {"data.synth_count", &c.synth_count},
      {"data.synth_eval_count", &c.synth_eval_count},
      {"data.synth_seed", &c.synth_seed},
      {"data.synth_eval_seed", &c.synth_eval_seed},
  };
}

Field& find_field(std::vector<Field>& all, const std::string& key) {
  for (Field& f : all) {
    if (key == f.key) return f;
  }
  throw std::invalid_argument("unknown config key '" + key + "'");
}

void assign(Field& f, const json& v) {
  const std::string key = f.key;
  try {
    std::visit(
        [&](auto& ref) {
          using R = std::decay_t<decltype(ref)>;
          if constexpr (std::is_same_v<R, Choice>) {
            const std::string name = v.get<std::string>();
            for (std::size_t i = 0; i < ref.names.size(); ++i) {
              if (ref.names[i] == name) {
                ref.set(static_cast<int>(i));
                return;
              }
            }
            throw std::invalid_argument("config key '" + key + "': unknown choice '" + name + "'");
          } else if constexpr (std::is_same_v<R, int*>) {
            if (!v.is_number_integer()) throw std::invalid_argument("config key '" + key + "' expects an integer");
            *ref = v.get<int>();
          } else if constexpr (std::is_same_v<R, std::uint64_t*>) {
            if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
              throw std::invalid_argument("config key '" + key + "' expects a non-negative integer");
            }
            *ref = v.get<std::uint64_t>();
          } else if constexpr (std::is_same_v<R, double*>) {
            if (!v.is_number()) throw std::invalid_argument("config key '" + key + "' expects a number");
            *ref = v.get<double>();
          } else if constexpr (std::is_same_v<R, bool*>) {
            if (!v.is_boolean()) throw std::invalid_argument("config key '" + key + "' expects true or false");
            *ref = v.get<bool>();
          } else {
            if (!v.is_string()) throw std::invalid_argument("config key '" + key + "' expects a string");
            *ref = v.get<std::string>();
          }
        },
        f.ref);
  } catch (const json::exception& e) {
    throw std::invalid_argument("config key '" + key + "': " + e.what());
  }
}

json value_of(const Field& f) {
  return std::visit(
      [](const auto& ref) -> json {
        using R = std::decay_t<decltype(ref)>;
        if constexpr (std::is_same_v<R, Choice>) {
          return ref.names.at(static_cast<std::size_t>(ref.get()));
        } else {
          return *ref;
        }
      },
      f.ref);
}

}  // namespace

void validate(const TrainConfig& c) {
  validate(c.net);
  validate(c.mask);
  auto nonneg = [](double v, const char* what) {
    if (!(v >= 0.0)) throw std::invalid_argument(std::string(what) + " must be >= 0");
  };
  nonneg(c.weights.lambda_u, "loss.lambda_u");
  nonneg(c.weights.lambda_mp, "loss.lambda_mp");
  nonneg(c.weights.lambda_mf, "loss.lambda_mf");
  nonneg(c.weights.lambda_ms, "loss.lambda_ms");
  if (!(c.psi >= 0.0 && c.psi <= 1.0)) throw std::invalid_argument("loss.psi must lie in [0, 1]");
  if (!(c.tau > 0.0)) throw std::invalid_argument("loss.tau must be > 0");
  if (!(c.alpha >= 0.0 && c.alpha <= 1.0)) throw std::invalid_argument("loss.alpha must lie in [0, 1]");
  if (!(c.feature_drop >= 0.0 && c.feature_drop < 1.0)) {
    throw std::invalid_argument("perturb.feature_drop must lie in [0, 1)");
  }
  if (c.iterations < 0) throw std::invalid_argument("train.iterations must be >= 0");
  if (c.batch < 1) throw std::invalid_argument("train.batch must be >= 1");
  if (c.eval_interval < 0 || c.checkpoint_interval < 0) throw std::invalid_argument("intervals must be >= 0");
  nonneg(c.lr, "optim.lr");
  nonneg(c.lr_pixel, "optim.lr_pixel");
  nonneg(c.weight_decay, "optim.weight_decay");
  if (c.n_labeled < 1) throw std::invalid_argument("data.n_labeled must be >= 1");
}

json to_json(const TrainConfig& config) {
  TrainConfig copy = config;
  json out = json::object();
  for (const Field& f : fields(copy)) out[f.key] = value_of(f);
  return out;
}

TrainConfig config_from_json(const json& flat, TrainConfig base) {
  if (!flat.is_object()) throw std::invalid_argument("config must be a JSON object");
  auto all = fields(base);
  for (const auto& [key, value] : flat.items()) assign(find_field(all, key), value);
  return base;
}

void apply_override(TrainConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw std::invalid_argument("override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  auto all = fields(config);
  Field& f = find_field(all, key);
  json v;
  if (std::holds_alternative<std::string*>(f.ref) || std::holds_alternative<Choice>(f.ref)) {
    v = text;
  } else {
    try {
      v = json::parse(text);
    } catch (const json::exception&) {
      throw std::invalid_argument("override '" + assignment + "': cannot parse value");
    }
  }
  assign(f, v);
}

std::string config_dump(const TrainConfig& config) {
  return to_json(config).dump();
}

std::string config_hash(const TrainConfig& config) {
  // FNV-1a over the canonical dump.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : config_dump(config)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<std::string> config_keys() {
  TrainConfig c;
  std::vector<std::string> out;
  for (const Field& f : fields(c)) out.emplace_back(f.key);
  return out;
}

}  // namespace maskseg
