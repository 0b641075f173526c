#include "ktrace/model.hpp"

#include <algorithm>
#include <stdexcept>

#include "ktrace/attention.hpp"
#include "ktrace/dkt.hpp"
#include "ktrace/dkvmn.hpp"

namespace ktrace {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::dkt: return "dkt";
    case ModelKind::dkvmn: return "dkvmn";
    case ModelKind::sakt: return "sakt";
    case ModelKind::rkt: return "rkt";
  }
  throw std::logic_error("bad model kind");
}

ModelKind model_kind_from(const std::string& name) {
  if (name == "dkt") return ModelKind::dkt;
  if (name == "dkvmn") return ModelKind::dkvmn;
  if (name == "sakt") return ModelKind::sakt;
  if (name == "rkt") return ModelKind::rkt;
  throw std::invalid_argument("unknown model '" + name + "' (want dkt, dkvmn, sakt or rkt)");
}

Param* Model::find_param(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

Tensor Model::add_param(const std::string& name, int rows, int cols, std::mt19937_64& rng,
                        double bound, bool decay) {
  Tensor t = Tensor::zeros({rows, cols}, true);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.values_mut()) v = dist(rng);
  params_.push_back({name, t, decay});
  return t;
}

Tensor Model::add_const_init(const std::string& name, int rows, int cols, double value,
                             bool decay) {
  Tensor t = Tensor::full({rows, cols}, value, true);
  params_.push_back({name, t, decay});
  return t;
}

Tensor binary_ce_loss(Tape& tape, const Tensor& probabilities, const std::vector<int>& labels,
                      const std::vector<double>* valid_mask) {
  const auto n = probabilities.values().size();
  if (labels.size() != n)
    throw std::invalid_argument("binary_ce_loss: labels do not match probabilities");
  if (valid_mask && valid_mask->size() != n)
    throw std::invalid_argument("binary_ce_loss: mask does not match probabilities");

  Tensor r = Tensor::zeros(probabilities.shape());
  Tensor one_minus_r = Tensor::zeros(probabilities.shape());
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != 0 && labels[i] != 1)
      throw std::invalid_argument("binary_ce_loss: labels must be 0 or 1");
    r.values_mut()[i] = labels[i];
    one_minus_r.values_mut()[i] = 1 - labels[i];
  }

  Tensor p = tape.clamp(probabilities, 1e-7, 1.0 - 1e-7);
  Tensor term = tape.add(tape.mul(r, tape.log(p)),
                         tape.mul(one_minus_r, tape.log(tape.sub(Tensor::scalar(1.0), p))));
  if (valid_mask) {
    Tensor m = Tensor::zeros(probabilities.shape());
    std::copy(valid_mask->begin(), valid_mask->end(), m.values_mut().begin());
    term = tape.mul(term, m);
  }
  return tape.scale(tape.sum(term), -1.0);
}

std::unique_ptr<Model> make_model(const ModelSpec& spec, const RelationMatrix* relations,
                                  std::vector<std::string> students) {
  switch (spec.kind) {
    case ModelKind::dkt:
      return std::make_unique<DktModel>(spec);
    case ModelKind::dkvmn:
      return std::make_unique<DkvmnModel>(spec);
    case ModelKind::sakt:
    case ModelKind::rkt:
      return std::make_unique<AttnModel>(spec, relations, std::move(students));
  }
  throw std::logic_error("bad model kind");
}

}  // namespace ktrace
