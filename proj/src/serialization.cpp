#include "memeclip/serialization.hpp"

namespace memeclip {

void to_json(nlohmann::json& j, const HeadConfig& c) {
  j = {{"d_embed", c.d_embed},
       {"d_proj", c.d_proj},
       {"adapter_reduction", c.adapter_reduction},
       {"alpha", c.alpha},
       {"sigma", c.sigma},
       {"eps", c.eps},
       {"n_classes", c.n_classes},
       {"use_projection", c.use_projection},
       {"use_adapters", c.use_adapters},
       {"classifier_kind", to_string(c.classifier_kind)},
       {"init_kind", to_string(c.init_kind)},
       {"fusion_kind", to_string(c.fusion_kind)}};
}

void from_json(const nlohmann::json& j, HeadConfig& c) {
  j.at("d_embed").get_to(c.d_embed);
  j.at("d_proj").get_to(c.d_proj);
  j.at("adapter_reduction").get_to(c.adapter_reduction);
  j.at("alpha").get_to(c.alpha);
  j.at("sigma").get_to(c.sigma);
  j.at("eps").get_to(c.eps);
  j.at("n_classes").get_to(c.n_classes);
  j.at("use_projection").get_to(c.use_projection);
  j.at("use_adapters").get_to(c.use_adapters);
  c.classifier_kind = parse_classifier_kind(j.at("classifier_kind").get<std::string>());
  c.init_kind = parse_init_kind(j.at("init_kind").get<std::string>());
  c.fusion_kind = parse_fusion_kind(j.at("fusion_kind").get<std::string>());
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"learning_rate", c.learning_rate},
       {"batch_size", c.batch_size},
       {"epochs", c.epochs},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"adam_eps", c.adam_eps},
       {"seed", c.seed},
       {"task", c.task},
       {"selection_metric", "val_macro_auroc"}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  j.at("learning_rate").get_to(c.learning_rate);
  j.at("batch_size").get_to(c.batch_size);
  j.at("epochs").get_to(c.epochs);
  j.at("beta1").get_to(c.beta1);
  j.at("beta2").get_to(c.beta2);
  j.at("adam_eps").get_to(c.adam_eps);
  j.at("seed").get_to(c.seed);
  j.at("task").get_to(c.task);
}

void to_json(nlohmann::json& j, const EpochRecord& r) {
  j = {{"train_loss_mean", r.train_loss_mean},
       {"val_accuracy", r.val_accuracy},
       {"val_macro_auroc", r.val_macro_auroc},
       {"val_macro_f1", r.val_macro_f1}};
}

void from_json(const nlohmann::json& j, EpochRecord& r) {
  j.at("train_loss_mean").get_to(r.train_loss_mean);
  j.at("val_accuracy").get_to(r.val_accuracy);
  j.at("val_macro_auroc").get_to(r.val_macro_auroc);
  j.at("val_macro_f1").get_to(r.val_macro_f1);
}

void to_json(nlohmann::json& j, const TrainHistory& h) {
  j = {{"epochs", h.epochs}, {"best_epoch", nullptr}};
  if (h.best_epoch) j["best_epoch"] = *h.best_epoch;
}

void from_json(const nlohmann::json& j, TrainHistory& h) {
  j.at("epochs").get_to(h.epochs);
  const auto& best = j.at("best_epoch");
  h.best_epoch = best.is_null() ? std::nullopt : std::optional<std::size_t>(best.get<std::size_t>());
}

void to_json(nlohmann::json& j, const MetricsReport& r) {
  j = {{"task", r.task},
       {"split", to_string(r.split)},
       {"accuracy", r.accuracy},
       {"macro_auroc", r.macro_auroc},
       {"macro_f1", r.macro_f1},
       {"n_samples", r.n_samples},
       {"per_class_f1", r.per_class_f1}};
}

void from_json(const nlohmann::json& j, MetricsReport& r) {
  j.at("task").get_to(r.task);
  r.split = parse_split(j.at("split").get<std::string>());
  j.at("accuracy").get_to(r.accuracy);
  j.at("macro_auroc").get_to(r.macro_auroc);
  j.at("macro_f1").get_to(r.macro_f1);
  j.at("n_samples").get_to(r.n_samples);
  j.at("per_class_f1").get_to(r.per_class_f1);
}

}  // namespace memeclip
