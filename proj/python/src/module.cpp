#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "memeclip/embedding_store.hpp"
#include "memeclip/error.hpp"
#include "memeclip/harness.hpp"
#include "memeclip/head.hpp"
#include "memeclip/metrics.hpp"
#include "memeclip/synthetic.hpp"
#include "memeclip/trainer.hpp"

namespace py = pybind11;
using namespace memeclip;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IntArray = py::array_t<int, py::array::c_style | py::array::forcecast>;

std::span<const double> as_span(const DoubleArray& a) { return {a.data(), static_cast<std::size_t>(a.size())}; }
std::span<const int> as_span(const IntArray& a) { return {a.data(), static_cast<std::size_t>(a.size())}; }

py::array_t<double> to_numpy(const Vector& v) { return py::array_t<double>(static_cast<py::ssize_t>(v.size()), v.data()); }

py::array_t<double> rows_to_numpy(const std::vector<Vector>& rows, std::size_t cols) {
  py::array_t<double> out({static_cast<py::ssize_t>(rows.size()), static_cast<py::ssize_t>(cols)});
  auto m = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols; ++j) m(static_cast<py::ssize_t>(i), static_cast<py::ssize_t>(j)) = rows[i][j];
  }
  return out;
}

std::pair<std::size_t, std::size_t> matrix_shape(const DoubleArray& a, const char* what) {
  if (a.ndim() != 2) throw py::value_error(std::string(what) + " must be a 2-D array");
  return {static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1))};
}

py::dict history_to_dict(const TrainHistory& h) {
  py::list epochs;
  for (const auto& e : h.epochs) {
    py::dict d;
    d["train_loss_mean"] = e.train_loss_mean;
    d["val_accuracy"] = e.val_accuracy;
    d["val_macro_auroc"] = e.val_macro_auroc;
    d["val_macro_f1"] = e.val_macro_f1;
    epochs.append(d);
  }
  py::dict out;
  out["epochs"] = epochs;
  out["best_epoch"] = h.best_epoch ? py::cast(*h.best_epoch) : py::none();
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "MemeCLIP classification head (C++ core)";

  py::enum_<ErrorCode>(m, "ErrorCode")
      .value("validation", ErrorCode::validation)
      .value("format", ErrorCode::format)
      .value("corruption", ErrorCode::corruption)
      .value("io", ErrorCode::io)
      .value("dimension", ErrorCode::dimension)
      .value("index", ErrorCode::index)
      .value("lookup", ErrorCode::lookup)
      .value("configuration", ErrorCode::configuration)
      .value("numeric", ErrorCode::numeric)
      .value("data", ErrorCode::data)
      .value("state", ErrorCode::state)
      .value("undefined_metric", ErrorCode::undefined_metric);

  // Raised for every library failure; `.code` holds the ErrorCode.
  static py::exception<Error> error_type(m, "MemeclipError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object inst = py::handle(error_type)(e.what());
      inst.attr("code") = e.code();
      PyErr_SetObject(error_type.ptr(), inst.ptr());
    }
  });

  py::enum_<Split>(m, "Split").value("train", Split::train).value("val", Split::val).value("test", Split::test);
  py::enum_<ClassifierKind>(m, "ClassifierKind")
      .value("linear", ClassifierKind::linear)
      .value("cosine", ClassifierKind::cosine);
  py::enum_<InitKind>(m, "InitKind").value("random", InitKind::random).value("sai", InitKind::sai);
  py::enum_<FusionKind>(m, "FusionKind").value("multiply", FusionKind::multiply).value("concat", FusionKind::concat);

  // --- data ---------------------------------------------------------------
  py::class_<TaskSchema>(m, "TaskSchema")
      .def(py::init<>())
      .def(py::init([](std::string name, std::vector<std::string> classes) {
             return TaskSchema{std::move(name), static_cast<int>(classes.size()), std::move(classes)};
           }),
           py::arg("name"), py::arg("class_names"))
      .def_readwrite("name", &TaskSchema::name)
      .def_readwrite("num_classes", &TaskSchema::num_classes)
      .def_readwrite("class_names", &TaskSchema::class_names)
      .def("__eq__", [](const TaskSchema& a, const TaskSchema& b) { return a == b; });
  m.def("canonical_schema", &canonical_schema, py::arg("task"));

  py::class_<EmbeddingRecord>(m, "EmbeddingRecord")
      .def(py::init<>())
      .def(py::init([](std::string id, Split split, std::vector<float> image, std::vector<float> text,
                       std::vector<int> labels) {
             return EmbeddingRecord{std::move(id), split, std::move(image), std::move(text), std::move(labels)};
           }),
           py::arg("id"), py::arg("split"), py::arg("image_embedding"), py::arg("text_embedding"),
           py::arg("labels"))
      .def_readwrite("id", &EmbeddingRecord::id)
      .def_readwrite("split", &EmbeddingRecord::split)
      .def_readwrite("image_embedding", &EmbeddingRecord::image_embedding)
      .def_readwrite("text_embedding", &EmbeddingRecord::text_embedding)
      .def_readwrite("labels", &EmbeddingRecord::labels);
  m.attr("MISSING_LABEL") = kMissingLabel;

  py::class_<EmbeddingBundle>(m, "EmbeddingBundle")
      .def(py::init<>())
      .def_readwrite("d_embed", &EmbeddingBundle::d_embed)
      .def_readwrite("tasks", &EmbeddingBundle::tasks)
      .def_readwrite("records", &EmbeddingBundle::records)
      .def("task_index", &EmbeddingBundle::task_index)
      .def("validate", [](const EmbeddingBundle& b) { validate(b); })
      .def("__len__", [](const EmbeddingBundle& b) { return b.records.size(); })
      .def("__eq__", [](const EmbeddingBundle& a, const EmbeddingBundle& b) { return a == b; });
  m.def("read_bundle", &read_bundle, py::arg("path"));
  m.def("write_bundle", &write_bundle, py::arg("bundle"), py::arg("path"));

  m.def(
      "task_view",
      [](const EmbeddingBundle& b, const std::string& task, Split split) {
        const TaskView v = task_view(b, task, split);
        const auto d = static_cast<std::size_t>(b.d_embed);
        py::dict out;
        out["ids"] = v.ids;
        out["image"] = rows_to_numpy(v.image, d);
        out["text"] = rows_to_numpy(v.text, d);
        out["labels"] = py::array_t<int>(static_cast<py::ssize_t>(v.labels.size()), v.labels.data());
        return out;
      },
      py::arg("bundle"), py::arg("task"), py::arg("split"));

  py::class_<ClassPromptSet>(m, "ClassPromptSet")
      .def(py::init<>())
      .def(py::init([](std::string task, std::vector<std::string> names, const DoubleArray& emb) {
             const auto [rows, cols] = matrix_shape(emb, "embeddings");
             ClassPromptSet p;
             p.task = std::move(task);
             p.class_names = std::move(names);
             for (std::size_t i = 0; i < rows; ++i) {
               p.embeddings.emplace_back(emb.data() + i * cols, emb.data() + (i + 1) * cols);
             }
             return p;
           }),
           py::arg("task"), py::arg("class_names"), py::arg("embeddings"))
      .def_readwrite("task", &ClassPromptSet::task)
      .def_readwrite("prompt_template", &ClassPromptSet::prompt_template)
      .def_readwrite("class_names", &ClassPromptSet::class_names)
      .def_readwrite("embeddings", &ClassPromptSet::embeddings)
      .def_property_readonly("d_embed", &ClassPromptSet::d_embed)
      .def("__eq__", [](const ClassPromptSet& a, const ClassPromptSet& b) { return a == b; });
  m.def("read_class_prompts", &read_class_prompts, py::arg("path"));
  m.def("write_class_prompts", &write_class_prompts, py::arg("prompts"), py::arg("path"));

  // --- head ---------------------------------------------------------------
  py::class_<HeadConfig>(m, "HeadConfig")
      .def(py::init<>())
      .def_readwrite("d_embed", &HeadConfig::d_embed)
      .def_readwrite("d_proj", &HeadConfig::d_proj)
      .def_readwrite("adapter_reduction", &HeadConfig::adapter_reduction)
      .def_readwrite("alpha", &HeadConfig::alpha)
      .def_readwrite("sigma", &HeadConfig::sigma)
      .def_readwrite("eps", &HeadConfig::eps)
      .def_readwrite("n_classes", &HeadConfig::n_classes)
      .def_readwrite("use_projection", &HeadConfig::use_projection)
      .def_readwrite("use_adapters", &HeadConfig::use_adapters)
      .def_readwrite("classifier_kind", &HeadConfig::classifier_kind)
      .def_readwrite("init_kind", &HeadConfig::init_kind)
      .def_readwrite("fusion_kind", &HeadConfig::fusion_kind)
      .def("validate", &HeadConfig::validate)
      .def("__eq__", [](const HeadConfig& a, const HeadConfig& b) { return a == b; })
      .def("__repr__", [](const HeadConfig& c) { return "HeadConfig(" + describe_toggles(c) + ")"; });

  py::class_<HeadParams>(m, "HeadParams")
      .def("scalar_count", &HeadParams::scalar_count)
      .def("tensor_names", &HeadParams::tensor_names)
      .def("flatten", [](const HeadParams& p) { return to_numpy(p.flatten()); })
      .def("unflatten", [](HeadParams& p, const DoubleArray& flat) { p.unflatten(as_span(flat)); })
      .def("__eq__", [](const HeadParams& a, const HeadParams& b) { return a == b; });

  m.def(
      "init_params",
      [](const HeadConfig& c, std::uint64_t seed, const ClassPromptSet* prompts) { return init_params(c, seed, prompts); },
      py::arg("config"), py::arg("seed"), py::arg("prompts") = nullptr);
  m.def(
      "forward",
      [](const HeadParams& p, const HeadConfig& c, const DoubleArray& image, const DoubleArray& text) {
        return to_numpy(forward(p, c, as_span(image), as_span(text)).logits);
      },
      py::arg("params"), py::arg("config"), py::arg("image_embedding"), py::arg("text_embedding"),
      "Logits for one sample.");
  m.def("count_params", &count_params, py::arg("config"));

  // --- metrics ------------------------------------------------------------
  m.def(
      "accuracy", [](const IntArray& p, const IntArray& l) { return accuracy(as_span(p), as_span(l)); },
      py::arg("predictions"), py::arg("labels"));
  m.def(
      "macro_f1",
      [](const IntArray& p, const IntArray& l, int n) {
        const auto f = macro_f1(as_span(p), as_span(l), n);
        return py::make_tuple(f.macro, f.per_class);
      },
      py::arg("predictions"), py::arg("labels"), py::arg("n_classes"), "Returns (macro, per_class).");
  m.def(
      "macro_auroc",
      [](const DoubleArray& scores, const IntArray& labels) {
        const auto [rows, cols] = matrix_shape(scores, "scores");
        if (rows != static_cast<std::size_t>(labels.size())) throw py::value_error("one score row per label");
        return macro_auroc(as_span(scores), as_span(labels), static_cast<int>(cols));
      },
      py::arg("scores"), py::arg("labels"), "scores: n_samples x n_classes.");
  m.def(
      "binary_auroc",
      [](const DoubleArray& s, const IntArray& l, int positive) { return binary_auroc(as_span(s), as_span(l), positive); },
      py::arg("scores"), py::arg("labels"), py::arg("positive_class"));

  py::class_<MetricsReport>(m, "MetricsReport")
      .def_readonly("task", &MetricsReport::task)
      .def_readonly("split", &MetricsReport::split)
      .def_readonly("accuracy", &MetricsReport::accuracy)
      .def_readonly("macro_auroc", &MetricsReport::macro_auroc)
      .def_readonly("macro_f1", &MetricsReport::macro_f1)
      .def_readonly("n_samples", &MetricsReport::n_samples)
      .def_readonly("per_class_f1", &MetricsReport::per_class_f1);

  // --- training -----------------------------------------------------------
  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("beta1", &TrainConfig::beta1)
      .def_readwrite("beta2", &TrainConfig::beta2)
      .def_readwrite("adam_eps", &TrainConfig::adam_eps)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("task", &TrainConfig::task)
      .def("validate", &TrainConfig::validate);

  py::class_<EpochRecord>(m, "EpochRecord")
      .def_readonly("train_loss_mean", &EpochRecord::train_loss_mean)
      .def_readonly("val_accuracy", &EpochRecord::val_accuracy)
      .def_readonly("val_macro_auroc", &EpochRecord::val_macro_auroc)
      .def_readonly("val_macro_f1", &EpochRecord::val_macro_f1);

  py::class_<FitResult>(m, "FitResult")
      .def_readonly("best_params", &FitResult::best_params)
      .def_readonly("final_params", &FitResult::final_params)
      .def_property_readonly("history", [](const FitResult& r) { return history_to_dict(r.history); });

  m.def(
      "fit",
      [](const EmbeddingBundle& b, const ClassPromptSet* prompts, const HeadConfig& hc, const TrainConfig& tc) {
        py::gil_scoped_release release;
        return fit(b, prompts, hc, tc);
      },
      py::arg("bundle"), py::arg("prompts"), py::arg("head_config"), py::arg("train_config"));
  m.def("evaluate", &evaluate, py::arg("params"), py::arg("config"), py::arg("bundle"), py::arg("task"),
        py::arg("split"));

  m.def(
      "save_checkpoint",
      [](const std::filesystem::path& path, const FitResult& r, const HeadConfig& hc, const TrainConfig& tc) {
        save_checkpoint({r.best_params, hc, tc, r.history}, path);
      },
      py::arg("path"), py::arg("result"), py::arg("head_config"), py::arg("train_config"),
      "Stores the selected (best) parameters with their configs and history.");
  m.def(
      "load_checkpoint",
      [](const std::filesystem::path& path) {
        Checkpoint c = load_checkpoint(path);
        py::dict out;
        out["params"] = std::move(c.params);
        out["head_config"] = c.head_config;
        out["train_config"] = c.train_config;
        out["history"] = history_to_dict(c.history);
        return out;
      },
      py::arg("path"));

  // --- harness ------------------------------------------------------------
  m.def(
      "make_separable_bundle",
      [](int n_train, int n_val, int n_test, int d_embed, double noise, std::uint64_t seed) {
        return make_separable_bundle({n_train, n_val, n_test, d_embed, noise, seed});
      },
      py::arg("n_train") = 200, py::arg("n_val") = 40, py::arg("n_test") = 40, py::arg("d_embed") = 8,
      py::arg("noise") = 0.05, py::arg("seed") = 7);
  m.def("make_separable_prompts", &make_separable_prompts, py::arg("d_embed") = 8);

  m.def(
      "ablation_ladder",
      [](const HeadConfig& base) {
        std::vector<std::pair<std::string, HeadConfig>> out;
        for (auto& v : ablation_ladder(base)) out.emplace_back(v.name, v.config);
        return out;
      },
      py::arg("base") = HeadConfig{});

  py::class_<GradcheckOptions>(m, "GradcheckOptions")
      .def(py::init<>())
      .def_readwrite("d_embed", &GradcheckOptions::d_embed)
      .def_readwrite("d_proj", &GradcheckOptions::d_proj)
      .def_readwrite("n_classes", &GradcheckOptions::n_classes)
      .def_readwrite("adapter_reduction", &GradcheckOptions::adapter_reduction)
      .def_readwrite("seeds", &GradcheckOptions::seeds)
      .def_readwrite("batch", &GradcheckOptions::batch)
      .def_readwrite("h", &GradcheckOptions::h)
      .def_readwrite("tolerance", &GradcheckOptions::tolerance)
      .def_readwrite("flip_classifier_sign", &GradcheckOptions::flip_classifier_sign);
  py::class_<GradcheckResult>(m, "GradcheckResult")
      .def_readonly("config_name", &GradcheckResult::config_name)
      .def_readonly("max_rel_error", &GradcheckResult::max_rel_error)
      .def_readonly("worst_tensor", &GradcheckResult::worst_tensor)
      .def_readonly("passed", &GradcheckResult::passed);
  m.def(
      "run_gradcheck",
      [](const GradcheckOptions& o) {
        py::gil_scoped_release release;
        return run_gradcheck(o);
      },
      py::arg("options") = GradcheckOptions{});
}
