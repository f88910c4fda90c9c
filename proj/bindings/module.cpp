#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "caedet/attacks.hpp"
#include "caedet/dataset.hpp"
#include "caedet/detectors.hpp"
#include "caedet/gmm.hpp"
#include "caedet/harness.hpp"
#include "caedet/nn.hpp"
#include "caedet/svm.hpp"
#include "caedet/tensor.hpp"
#include "caedet/types.hpp"

namespace py = pybind11;
using namespace caedet;

PYBIND11_MODULE(_core, m) {
    m.doc() = "poisoning attacks and autoencoder-based defenses for a periodically "
              "retrained linear SVM";

    // ---- core containers ----
    py::class_<Tensor>(m, "Tensor")
        .def(py::init<>())
        .def(py::init<std::vector<int>, std::vector<double>>(), py::arg("shape"),
             py::arg("data"))
        .def_static("zeros", &Tensor::zeros, py::arg("shape"))
        .def_readwrite("shape", &Tensor::shape)
        .def_readwrite("data", &Tensor::data)
        .def("size", &Tensor::size)
        .def("__repr__", [](const Tensor& t) { return "Tensor(" + t.shape_str() + ")"; });

    py::class_<LabeledSample>(m, "LabeledSample")
        .def(py::init<>())
        .def_readwrite("features", &LabeledSample::features)
        .def_readwrite("label", &LabeledSample::label)
        .def_readwrite("poison_flag", &LabeledSample::poison_flag)
        .def_readwrite("origin_id", &LabeledSample::origin_id);

    py::class_<BinaryTask>(m, "BinaryTask")
        .def(py::init<>())
        .def_readwrite("pos_class", &BinaryTask::pos_class)
        .def_readwrite("neg_class", &BinaryTask::neg_class)
        .def_readwrite("name", &BinaryTask::name)
        .def_readwrite("samples", &BinaryTask::samples);

    py::class_<RoundBuffer>(m, "RoundBuffer")
        .def(py::init<>())
        .def_readwrite("round_index", &RoundBuffer::round_index)
        .def_readwrite("train", &RoundBuffer::train)
        .def_readwrite("validation", &RoundBuffer::validation)
        .def_readwrite("test", &RoundBuffer::test)
        .def_readwrite("poisons", &RoundBuffer::poisons);

    py::class_<ExperimentDataset>(m, "ExperimentDataset")
        .def(py::init<>())
        .def_readwrite("rounds", &ExperimentDataset::rounds)
        .def_readwrite("n_detector_rounds", &ExperimentDataset::n_detector_rounds)
        .def_readwrite("n_eval_rounds", &ExperimentDataset::n_eval_rounds)
        .def_readwrite("sampled_with_replacement", &ExperimentDataset::sampled_with_replacement)
        .def_readwrite("warnings", &ExperimentDataset::warnings);

    // ---- data ----
    py::class_<data::RawDataset>(m, "RawDataset")
        .def_readwrite("images", &data::RawDataset::images)
        .def_readwrite("labels", &data::RawDataset::labels);

    py::class_<data::SplitSizes>(m, "SplitSizes")
        .def(py::init<>())
        .def_readwrite("train", &data::SplitSizes::train)
        .def_readwrite("validation", &data::SplitSizes::validation)
        .def_readwrite("test", &data::SplitSizes::test);

    m.def("load_idx", &data::load_idx, py::arg("images_path"), py::arg("labels_path"));
    m.def("make_binary_task", &data::make_binary_task, py::arg("raw"), py::arg("pos_class"),
          py::arg("neg_class"), py::arg("rng_seed"));
    m.def("synth_blobs", &data::synth_blobs, py::arg("n_per_class"), py::arg("dim"),
          py::arg("center_distance"), py::arg("spread"), py::arg("rng_seed"));
    m.def("build_rounds", &data::build_rounds, py::arg("task"), py::arg("n_rounds"),
          py::arg("sizes"), py::arg("rng_seed"), py::arg("n_eval_rounds") = 10,
          py::arg("allow_replacement") = true);

    // ---- svm ----
    py::class_<svm::SvmTrainConfig>(m, "SvmTrainConfig")
        .def(py::init<>())
        .def_readwrite("C", &svm::SvmTrainConfig::C)
        .def_readwrite("tolerance", &svm::SvmTrainConfig::tolerance)
        .def_readwrite("max_passes", &svm::SvmTrainConfig::max_passes)
        .def_readwrite("rng_seed", &svm::SvmTrainConfig::rng_seed);

    py::class_<svm::SvmModel>(m, "SvmModel")
        .def(py::init<>())
        .def_readwrite("w", &svm::SvmModel::w)
        .def_readwrite("b", &svm::SvmModel::b)
        .def_readwrite("alpha", &svm::SvmModel::alpha)
        .def_readwrite("C", &svm::SvmModel::C);

    m.def("train_svm", &svm::train_svm, py::arg("train"),
          py::arg("cfg") = svm::SvmTrainConfig{});
    m.def("decision_value", &svm::decision_value, py::arg("model"), py::arg("x"));
    m.def("predict", &svm::predict, py::arg("model"), py::arg("x"));
    m.def("accuracy", &svm::accuracy, py::arg("model"), py::arg("samples"));
    m.def("hinge_loss_sum", &svm::hinge_loss_sum, py::arg("model"), py::arg("samples"));
    m.def("max_kkt_violation", &svm::max_kkt_violation, py::arg("model"), py::arg("train"));
    m.def("dual_objective", &svm::dual_objective, py::arg("model"), py::arg("train"));
    m.def("save_svm", &svm::save_svm, py::arg("path"), py::arg("model"));
    m.def("load_svm", &svm::load_svm, py::arg("path"));

    // ---- attacks ----
    py::enum_<attacks::AttackKind>(m, "AttackKind")
        .value("Flip", attacks::AttackKind::Flip)
        .value("Optimal", attacks::AttackKind::Optimal)
        .value("SemiOptimal", attacks::AttackKind::SemiOptimal)
        .value("Mixed", attacks::AttackKind::Mixed);

    py::class_<attacks::AttackConfig>(m, "AttackConfig")
        .def(py::init<>())
        .def_readwrite("poison_rate", &attacks::AttackConfig::poison_rate)
        .def_readwrite("step_size", &attacks::AttackConfig::step_size)
        .def_readwrite("max_iters", &attacks::AttackConfig::max_iters)
        .def_readwrite("improvement_tol", &attacks::AttackConfig::improvement_tol)
        .def_readwrite("rng_seed", &attacks::AttackConfig::rng_seed)
        .def_readwrite("svm_cfg", &attacks::AttackConfig::svm_cfg);

    py::class_<attacks::PoisonProvenance>(m, "PoisonProvenance")
        .def_readwrite("kind", &attacks::PoisonProvenance::kind)
        .def_readwrite("source_origin_id", &attacks::PoisonProvenance::source_origin_id);

    py::class_<attacks::PoisonTrajectory>(m, "PoisonTrajectory")
        .def_readwrite("val_loss", &attacks::PoisonTrajectory::val_loss)
        .def_readwrite("accepted_steps", &attacks::PoisonTrajectory::accepted_steps)
        .def_readwrite("stopped_on_zero_gradient",
                       &attacks::PoisonTrajectory::stopped_on_zero_gradient);

    py::class_<attacks::PoisonSet>(m, "PoisonSet")
        .def_readwrite("poisons", &attacks::PoisonSet::poisons)
        .def_readwrite("provenance", &attacks::PoisonSet::provenance)
        .def_readwrite("trajectory_stats", &attacks::PoisonSet::trajectory_stats)
        .def("__len__", &attacks::PoisonSet::size);

    m.def("attack_name", &attacks::attack_name, py::arg("kind"));
    m.def("attack_from_name", &attacks::attack_from_name, py::arg("name"));
    m.def("poison_count", &attacks::poison_count, py::arg("poison_rate"), py::arg("n_train"));
    m.def("run_attack", &attacks::run_attack, py::arg("kind"), py::arg("train"),
          py::arg("validation"), py::arg("n_p"), py::arg("cfg"));
    m.def("poison_round", &attacks::poison_round, py::arg("round"), py::arg("kind"),
          py::arg("cfg"));
    m.def("poison_gradient", &attacks::poison_gradient, py::arg("model"), py::arg("train_set"),
          py::arg("poison_index"), py::arg("validation"));

    // ---- gmm ----
    py::class_<gmm::Gmm1dConfig>(m, "Gmm1dConfig")
        .def(py::init<>())
        .def_readwrite("max_iters", &gmm::Gmm1dConfig::max_iters)
        .def_readwrite("tol", &gmm::Gmm1dConfig::tol)
        .def_readwrite("variance_floor", &gmm::Gmm1dConfig::variance_floor);

    py::class_<gmm::GmmParams>(m, "GmmParams")
        .def_readwrite("weight", &gmm::GmmParams::weight)
        .def_readwrite("mean", &gmm::GmmParams::mean)
        .def_readwrite("variance", &gmm::GmmParams::variance)
        .def_readwrite("iterations", &gmm::GmmParams::iterations)
        .def_readwrite("final_log_likelihood", &gmm::GmmParams::final_log_likelihood)
        .def_readwrite("log_likelihood_history", &gmm::GmmParams::log_likelihood_history)
        .def_readwrite("degenerate", &gmm::GmmParams::degenerate);

    m.def("fit_gmm_1d", &gmm::fit_gmm_1d, py::arg("values"),
          py::arg("cfg") = gmm::Gmm1dConfig{});
    m.def("gmm_responsibility", &gmm::responsibility, py::arg("params"), py::arg("x"),
          py::arg("k"));
    m.def("gmm_assign_component", &gmm::assign_component, py::arg("params"), py::arg("x"));

    // ---- detectors ----
    py::enum_<detectors::DetectorKind>(m, "DetectorKind")
        .value("RAE", detectors::DetectorKind::RAE)
        .value("CAE", detectors::DetectorKind::CAE)
        .value("CAEPlus", detectors::DetectorKind::CAEPlus)
        .value("Centroid", detectors::DetectorKind::Centroid);

    py::class_<nn::TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("epochs", &nn::TrainConfig::epochs)
        .def_readwrite("batch_size", &nn::TrainConfig::batch_size)
        .def_readwrite("learning_rate", &nn::TrainConfig::learning_rate)
        .def_readwrite("rng_seed", &nn::TrainConfig::rng_seed);

    py::class_<detectors::DetectorTrainConfig>(m, "DetectorTrainConfig")
        .def(py::init<>())
        .def_readwrite("cae", &detectors::DetectorTrainConfig::cae)
        .def_readwrite("rae", &detectors::DetectorTrainConfig::rae)
        .def_readwrite("alpha", &detectors::DetectorTrainConfig::alpha);

    py::class_<detectors::DetectorModel>(m, "DetectorModel")
        .def_readwrite("kind", &detectors::DetectorModel::kind)
        .def_readwrite("alpha", &detectors::DetectorModel::alpha)
        .def_readwrite("trained", &detectors::DetectorModel::trained);

    py::class_<detectors::ScoredSample>(m, "ScoredSample")
        .def(py::init<>())
        .def_readwrite("re", &detectors::ScoredSample::re)
        .def_readwrite("loss", &detectors::ScoredSample::loss)
        .def_readwrite("combined", &detectors::ScoredSample::combined)
        .def_readwrite("index", &detectors::ScoredSample::index)
        .def_readwrite("poison_truth", &detectors::ScoredSample::poison_truth);

    py::class_<detectors::SeparatorKind>(m, "SeparatorKind")
        .def_static("gmm", &detectors::SeparatorKind::gmm)
        .def_static("top_k", &detectors::SeparatorKind::top_k, py::arg("k"));

    py::class_<detectors::DetectionMetrics>(m, "DetectionMetrics")
        .def_readwrite("precision", &detectors::DetectionMetrics::precision)
        .def_readwrite("recall", &detectors::DetectionMetrics::recall)
        .def_readwrite("f1", &detectors::DetectionMetrics::f1)
        .def_readwrite("true_positives", &detectors::DetectionMetrics::true_positives)
        .def_readwrite("false_positives", &detectors::DetectionMetrics::false_positives)
        .def_readwrite("false_negatives", &detectors::DetectionMetrics::false_negatives);

    py::class_<detectors::FilterResult>(m, "FilterResult")
        .def_readwrite("kept", &detectors::FilterResult::kept)
        .def_readwrite("verdicts", &detectors::FilterResult::verdicts)
        .def_readwrite("scores", &detectors::FilterResult::scores);

    m.def("detector_name", &detectors::detector_name, py::arg("kind"));
    m.def("detector_from_name", &detectors::detector_from_name, py::arg("name"));
    m.def("train_detector", &detectors::train_detector, py::arg("kind"),
          py::arg("training_data"), py::arg("cfg") = detectors::DetectorTrainConfig{});
    m.def("score", &detectors::score, py::arg("model"), py::arg("sample"));
    m.def("score_batch", &detectors::score_batch, py::arg("model"), py::arg("samples"));
    m.def(
        "separate",
        [](const std::vector<detectors::ScoredSample>& scores,
           detectors::SeparatorKind sep) {
            std::vector<bool> out;
            for (char v : detectors::separate(scores, sep)) out.push_back(v != 0);
            return out;
        },
        py::arg("scores"), py::arg("separator"));
    m.def(
        "detection_metrics",
        [](const std::vector<bool>& verdicts, const std::vector<bool>& truth) {
            std::vector<char> v(verdicts.begin(), verdicts.end());
            std::vector<char> t(truth.begin(), truth.end());
            return detectors::detection_metrics(v, t);
        },
        py::arg("verdicts"), py::arg("truth"));
    m.def("filter_round", &detectors::filter_round, py::arg("model"), py::arg("separator"),
          py::arg("round"));
    m.def("save_detector", &detectors::save_detector, py::arg("path"), py::arg("model"));
    m.def("load_detector", &detectors::load_detector, py::arg("path"));

    // ---- harness ----
    py::class_<harness::DatasetSpec>(m, "DatasetSpec")
        .def(py::init<>())
        .def_readwrite("source", &harness::DatasetSpec::source)
        .def_readwrite("data_dir", &harness::DatasetSpec::data_dir)
        .def_readwrite("images_file", &harness::DatasetSpec::images_file)
        .def_readwrite("labels_file", &harness::DatasetSpec::labels_file)
        .def_readwrite("pos_class", &harness::DatasetSpec::pos_class)
        .def_readwrite("neg_class", &harness::DatasetSpec::neg_class)
        .def_readwrite("image_pair", &harness::DatasetSpec::image_pair)
        .def_readwrite("n_per_class", &harness::DatasetSpec::n_per_class)
        .def_readwrite("blob_dim", &harness::DatasetSpec::blob_dim)
        .def_readwrite("blob_distance", &harness::DatasetSpec::blob_distance)
        .def_readwrite("blob_spread", &harness::DatasetSpec::blob_spread);

    py::class_<harness::ExperimentConfig>(m, "ExperimentConfig")
        .def(py::init<>())
        .def_readwrite("dataset", &harness::ExperimentConfig::dataset)
        .def_readwrite("attack", &harness::ExperimentConfig::attack)
        .def_readwrite("rate_grid", &harness::ExperimentConfig::rate_grid)
        .def_readwrite("detector_kinds", &harness::ExperimentConfig::detector_kinds)
        .def_readwrite("separator", &harness::ExperimentConfig::separator)
        .def_readwrite("alpha", &harness::ExperimentConfig::alpha)
        .def_readwrite("n_rounds", &harness::ExperimentConfig::n_rounds)
        .def_readwrite("n_eval_rounds", &harness::ExperimentConfig::n_eval_rounds)
        .def_readwrite("splits", &harness::ExperimentConfig::splits)
        .def_readwrite("svm_C", &harness::ExperimentConfig::svm_C)
        .def_readwrite("svm_tolerance", &harness::ExperimentConfig::svm_tolerance)
        .def_readwrite("attack_step", &harness::ExperimentConfig::attack_step)
        .def_readwrite("attack_max_iters", &harness::ExperimentConfig::attack_max_iters)
        .def_readwrite("attack_improvement_tol",
                       &harness::ExperimentConfig::attack_improvement_tol)
        .def_readwrite("cae_epochs", &harness::ExperimentConfig::cae_epochs)
        .def_readwrite("rae_epochs", &harness::ExperimentConfig::rae_epochs)
        .def_readwrite("batch_size", &harness::ExperimentConfig::batch_size)
        .def_readwrite("learning_rate", &harness::ExperimentConfig::learning_rate)
        .def_readwrite("epoch_scale", &harness::ExperimentConfig::epoch_scale)
        .def_readwrite("seed", &harness::ExperimentConfig::seed);

    py::class_<harness::ReportRow>(m, "ReportRow")
        .def_readwrite("task", &harness::ReportRow::task)
        .def_readwrite("attack", &harness::ReportRow::attack)
        .def_readwrite("rate", &harness::ReportRow::rate)
        .def_readwrite("detector", &harness::ReportRow::detector)
        .def_readwrite("separator", &harness::ReportRow::separator)
        .def_readwrite("alpha", &harness::ReportRow::alpha)
        .def_readwrite("param_name", &harness::ReportRow::param_name)
        .def_readwrite("param", &harness::ReportRow::param)
        .def_readwrite("scope", &harness::ReportRow::scope)
        .def_readwrite("round", &harness::ReportRow::round)
        .def_readwrite("note", &harness::ReportRow::note)
        .def_readwrite("f1", &harness::ReportRow::f1)
        .def_readwrite("precision", &harness::ReportRow::precision)
        .def_readwrite("recall", &harness::ReportRow::recall)
        .def_readwrite("acc_clean", &harness::ReportRow::acc_clean)
        .def_readwrite("acc_undefended", &harness::ReportRow::acc_undefended)
        .def_readwrite("acc_filtered", &harness::ReportRow::acc_filtered);

    py::class_<harness::Report>(m, "Report")
        .def_readwrite("experiment", &harness::Report::experiment)
        .def_readwrite("config", &harness::Report::config)
        .def_readwrite("rows", &harness::Report::rows);

    py::enum_<harness::ReportFormat>(m, "ReportFormat")
        .value("Csv", harness::ReportFormat::Csv)
        .value("Json", harness::ReportFormat::Json);

    m.def("load_task", &harness::load_task, py::arg("spec"), py::arg("seed"));
    m.def("robustness_tasks", &harness::robustness_tasks, py::arg("spec"), py::arg("seed"));
    m.def("run_periodic_update", &harness::run_periodic_update, py::arg("cfg"));
    m.def("run_threshold_sweep", &harness::run_threshold_sweep, py::arg("cfg"),
          py::arg("k_grid"));
    m.def("run_alpha_sweep", &harness::run_alpha_sweep, py::arg("cfg"), py::arg("alpha_grid"));
    m.def("run_ablation", &harness::run_ablation, py::arg("cfg"));
    m.def("run_robustness", &harness::run_robustness, py::arg("cfg"));
    m.def("render_report", &harness::render_report, py::arg("report"), py::arg("format"));
    m.def("emit_report", &harness::emit_report, py::arg("report"), py::arg("format"),
          py::arg("path"));
    m.def("format_from_name", &harness::format_from_name, py::arg("name"));
}
