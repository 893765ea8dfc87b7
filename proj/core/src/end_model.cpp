#include "iwl/end_model.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace iwl {

std::string to_string(EndModelKind kind) {
  switch (kind) {
    case EndModelKind::linear: return "linear";
    case EndModelKind::mlp2: return "mlp2";
  }
  throw std::logic_error("unknown end model kind");
}

EndModelKind end_model_kind_from_string(const std::string& name) {
  if (name == "linear") return EndModelKind::linear;
  if (name == "mlp2") return EndModelKind::mlp2;
  throw std::invalid_argument("unknown end model kind: " + name);
}

MlpShape EndModel::shape() const {
  if (kind == EndModelKind::linear) return MlpShape{{input_dim, num_classes}};
  return MlpShape{{input_dim, hidden_width, hidden_width, num_classes}};
}

EndModel EndModel::make(EndModelKind kind, int input_dim, int num_classes, int hidden_width,
                        Rng& rng) {
  if (input_dim < 1) throw std::invalid_argument("EndModel: input_dim must be >= 1");
  if (num_classes < 2) throw std::invalid_argument("EndModel: num_classes must be >= 2");
  if (kind == EndModelKind::mlp2 && hidden_width < 1) {
    throw std::invalid_argument("EndModel: hidden_width must be >= 1");
  }
  EndModel model;
  model.kind = kind;
  model.input_dim = input_dim;
  model.num_classes = num_classes;
  model.hidden_width = hidden_width;
  model.params.assign(model.shape().num_params(), 0.0);
  mlp_init_glorot(model.shape(), model.params, rng);
  return model;
}

std::vector<double> class_logits(const EndModel& model, std::span<const double> x,
                                 MlpCache& cache) {
  mlp_forward(model.shape(), model.params, x, cache);
  return cache.act.back();
}

std::vector<double> predict_proba(const EndModel& model, std::span<const double> x) {
  MlpCache cache;
  mlp_forward(model.shape(), model.params, x, cache);
  return softmax(cache.act.back());
}

int argmax_class(const EndModel& model, std::span<const double> x) {
  const std::vector<double> p = predict_proba(model, x);
  int best = 0;
  for (int j = 1; j < model.num_classes; ++j) {
    if (p[j] > p[best]) best = j;
  }
  return best + 1;
}

void end_model_backward(const EndModel& model, const MlpCache& cache,
                        std::span<const double> logit_grad, std::span<double> param_grad,
                        std::vector<double>* input_grad) {
  const MlpShape shape = model.shape();
  if (static_cast<int>(cache.act.size()) != shape.num_layers() + 1) {
    throw std::invalid_argument("end_model_backward: missing forward activations");
  }
  mlp_backward(shape, model.params, cache, logit_grad, param_grad, input_grad);
}

void save_end_model(const EndModel& model, const std::string& path) {
  nlohmann::json j{{"kind", to_string(model.kind)},
                   {"input_dim", model.input_dim},
                   {"num_classes", model.num_classes},
                   {"hidden_width", model.hidden_width},
                   {"params", model.params}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::invalid_argument("save_end_model: cannot open " + path);
  out << j.dump() << '\n';
  if (!out) throw std::runtime_error("save_end_model: write failed for " + path);
}

EndModel load_end_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("load_end_model: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("load_end_model: invalid JSON in " + path + ": " + e.what());
  }
  EndModel model;
  model.kind = end_model_kind_from_string(j.at("kind").get<std::string>());
  model.input_dim = j.at("input_dim").get<int>();
  model.num_classes = j.at("num_classes").get<int>();
  model.hidden_width = j.at("hidden_width").get<int>();
  model.params = j.at("params").get<std::vector<double>>();
  if (model.params.size() != model.shape().num_params()) {
    throw std::invalid_argument("load_end_model: parameter count does not match shape in " + path);
  }
  return model;
}

}  // namespace iwl
