#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "gsedd/checks.hpp"
#include "gsedd/eval.hpp"
#include "gsedd/guidance.hpp"
#include "gsedd/model.hpp"
#include "gsedd/noise.hpp"
#include "gsedd/oracle.hpp"
#include "gsedd/repertoire.hpp"
#include "gsedd/sampler.hpp"
#include "gsedd/seq.hpp"
#include "gsedd/train.hpp"

namespace py = pybind11;
using namespace gsedd;

namespace {

std::vector<std::vector<double>> mat_to_rows(const Eigen::MatrixXd& m) {
    std::vector<std::vector<double>> rows(static_cast<size_t>(m.rows()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        rows[static_cast<size_t>(r)].resize(static_cast<size_t>(m.cols()));
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            rows[static_cast<size_t>(r)][static_cast<size_t>(c)] = m(r, c);
    }
    return rows;
}

TransitionKernel make_kernel(const std::string& variant, const Alphabet& alphabet,
                             const std::optional<TokenSequence>& germline) {
    const KernelVariant v = variant_from_name(variant);
    if (v == KernelVariant::germline_absorbing) {
        if (!germline) throw std::invalid_argument("germline variant needs a germline");
        return TransitionKernel::germline_absorbing(alphabet, *germline);
    }
    return v == KernelVariant::uniform ? TransitionKernel::uniform(alphabet)
                                       : TransitionKernel::mask_absorbing(alphabet);
}

}  // namespace

PYBIND11_MODULE(_gsedd, m) {
    m.doc() = "score-entropy discrete diffusion with a germline absorbing state";

    py::class_<Alphabet>(m, "Alphabet")
        .def(py::init<std::string, std::optional<int>>(), py::arg("symbols"),
             py::arg("mask_index") = std::nullopt)
        .def_static("canonical", &Alphabet::canonical)
        .def_property_readonly("symbols", &Alphabet::symbols)
        .def_property_readonly("mask_index", &Alphabet::mask_index)
        .def("__len__", &Alphabet::size)
        .def("index", &Alphabet::index)
        .def("symbol", &Alphabet::symbol);

    m.def("encode", &encode);
    m.def("decode", &decode);
    m.def("levenshtein", &levenshtein);
    m.def("percent_identity", &percent_identity);
    m.def("sequence_identity", &sequence_identity);
    m.def("non_germline_positions", [](const TokenSequence& germline, const TokenSequence& observed) {
        return non_germline_positions(GermlinePair{germline, observed, ""});
    });

    py::class_<NoiseSchedule>(m, "NoiseSchedule")
        .def(py::init([](double epsilon) { return NoiseSchedule{epsilon}; }),
             py::arg("epsilon") = 1e-3)
        .def_readonly("epsilon", &NoiseSchedule::epsilon)
        .def("total_noise", &NoiseSchedule::total_noise)
        .def("noise_rate", &NoiseSchedule::noise_rate);

    m.def(
        "marginal",
        [](const std::string& variant, const Alphabet& alphabet, const TokenSequence& x0, double t,
           double epsilon, const std::optional<TokenSequence>& germline) {
            return marginal(make_kernel(variant, alphabet, germline), x0, t, NoiseSchedule{epsilon});
        },
        py::arg("variant"), py::arg("alphabet"), py::arg("x0"), py::arg("t"),
        py::arg("epsilon") = 1e-3, py::arg("germline") = std::nullopt);

    m.def(
        "forward_sample",
        [](const std::string& variant, const Alphabet& alphabet, const TokenSequence& germline,
           const TokenSequence& observed, double t, uint64_t seed, double epsilon) {
            const auto kernel = make_kernel(variant, alphabet, germline);
            return forward_sample(kernel, GermlinePair{germline, observed, ""}, t,
                                  NoiseSchedule{epsilon}, seed);
        },
        py::arg("variant"), py::arg("alphabet"), py::arg("germline"), py::arg("observed"),
        py::arg("t"), py::arg("seed"), py::arg("epsilon") = 1e-3);

    m.def(
        "step_transition_matrix",
        [](const std::string& variant, const Alphabet& alphabet, double dsigma, int position,
           const std::optional<TokenSequence>& germline) {
            return mat_to_rows(
                step_transition_matrix(make_kernel(variant, alphabet, germline), dsigma, position));
        },
        py::arg("variant"), py::arg("alphabet"), py::arg("dsigma"), py::arg("position") = 0,
        py::arg("germline") = std::nullopt);

    m.def("marginal_ratio",
          [](const std::string& variant, const Alphabet& alphabet, int x0_token, int xt_token,
             int y_token, double sigma, int position, const std::optional<TokenSequence>& germline) {
              return marginal_ratio(make_kernel(variant, alphabet, germline), x0_token, xt_token,
                                    y_token, sigma, position);
          },
          py::arg("variant"), py::arg("alphabet"), py::arg("x0_token"), py::arg("xt_token"),
          py::arg("y_token"), py::arg("sigma"), py::arg("position") = 0,
          py::arg("germline") = std::nullopt);

    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init<>())
        .def_readwrite("layers", &ModelConfig::layers)
        .def_readwrite("embed_dim", &ModelConfig::embed_dim)
        .def_readwrite("heads", &ModelConfig::heads)
        .def_readwrite("feedforward_dim", &ModelConfig::feedforward_dim)
        .def_readwrite("max_length", &ModelConfig::max_length)
        .def_readwrite("alphabet_size", &ModelConfig::alphabet_size)
        .def_readwrite("time_conditioned", &ModelConfig::time_conditioned)
        .def_property(
            "variant",
            [](const ModelConfig& c) { return std::string(variant_name(c.variant)); },
            [](ModelConfig& c, const std::string& v) { c.variant = variant_from_name(v); });

    py::class_<ScoreModel>(m, "ScoreModel")
        .def_static("init", &ScoreModel::init, py::arg("config"), py::arg("seed"))
        .def_readonly("config", &ScoreModel::config)
        .def_readonly("step", &ScoreModel::step)
        .def("forward", &ScoreModel::forward, py::arg("x"), py::arg("t") = std::nullopt,
             py::arg("use_ema") = false)
        .def("time_embedding", &ScoreModel::time_embedding)
        .def("save", [](const ScoreModel& model, const std::string& path) {
            save_checkpoint(model, path);
        })
        .def_static("load", [](const std::string& path) { return load_checkpoint(path); });

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_static("paper_preset", &TrainConfig::paper_preset)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("learning_rate", &TrainConfig::learning_rate)
        .def_readwrite("warmup_steps", &TrainConfig::warmup_steps)
        .def_readwrite("max_steps", &TrainConfig::max_steps)
        .def_readwrite("grad_clip_norm", &TrainConfig::grad_clip_norm)
        .def_readwrite("ema_decay", &TrainConfig::ema_decay)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_readwrite("eval_every", &TrainConfig::eval_every);

    m.def(
        "train_model",
        [](ScoreModel& model, const std::string& variant, const Alphabet& alphabet,
           const std::vector<std::pair<std::string, std::string>>& pairs, const TrainConfig& config,
           double epsilon) {
            std::vector<GermlinePair> train_set;
            for (const auto& [germ, obs] : pairs)
                train_set.push_back(make_pair_checked(encode(germ, alphabet), encode(obs, alphabet),
                                                      "py", alphabet));
            const TrainResult result =
                train_loop(config, variant_from_name(variant), alphabet, train_set, {}, model,
                           NoiseSchedule{epsilon});
            std::vector<std::tuple<int64_t, std::string, double>> rows;
            for (const auto& row : result.log) rows.emplace_back(row.step, row.split, row.loss);
            return rows;
        },
        py::arg("model"), py::arg("variant"), py::arg("alphabet"), py::arg("pairs"),
        py::arg("config"), py::arg("epsilon") = 1e-3);

    m.def(
        "sample_sequences",
        [](const ScoreModel& model, const Alphabet& alphabet, int num, int steps,
           const std::string& decoder, double gamma, uint64_t seed, std::optional<int> length,
           const std::optional<std::vector<std::string>>& germlines, double epsilon) {
            SamplerConfig config;
            config.steps = steps;
            config.decoder = decoder_from_name(decoder);
            config.gamma = gamma;
            std::vector<std::string> out;
            for (int k = 0; k < num; ++k) {
                config.seed = derive_seed(seed, "sample", static_cast<uint64_t>(k));
                std::optional<TokenSequence> germ;
                if (germlines && !germlines->empty())
                    germ = encode((*germlines)[static_cast<size_t>(k) % germlines->size()], alphabet);
                const auto kernel =
                    make_kernel(variant_name(model.config.variant), alphabet, germ);
                const auto seq = sample(model, kernel, config, length, nullptr,
                                        NoiseSchedule{epsilon});
                out.push_back(decode(seq, alphabet));
            }
            return out;
        },
        py::arg("model"), py::arg("alphabet"), py::arg("num"), py::arg("steps") = 128,
        py::arg("decoder") = "tweedie", py::arg("gamma") = 0.0, py::arg("seed") = 0,
        py::arg("length") = std::nullopt, py::arg("germlines") = std::nullopt,
        py::arg("epsilon") = 1e-3);

    m.def("nn_identity", &nn_identity);
    m.def("pairwise_diversity", &pairwise_diversity);

    m.def("run_oracle_suite", [](bool flip) {
        std::vector<std::tuple<std::string, double, double, bool>> rows;
        for (const auto& r : checks::run_oracle_suite(flip))
            rows.emplace_back(r.name, r.tolerance, r.observed, r.pass);
        return rows;
    }, py::arg("flip_sigma_sign") = false);

    m.def("oracle_quick_checks", []() {
        std::vector<std::tuple<std::string, double, double, bool>> rows;
        const auto a = checks::check_marginal_exactness(50, 1e-8, 1);
        rows.emplace_back(a.name, a.tolerance, a.observed, a.pass);
        const auto b = checks::check_step_matrices(25, 1e-8, 2);
        rows.emplace_back(b.name, b.tolerance, b.observed, b.pass);
        return rows;
    });

    m.def(
        "make_dataset_files",
        [](const std::string& out_dir, uint64_t seed, int train_size, int val_size, int test_size,
           const std::string& scale_path) {
            SimConfig config;
            config.seed = seed;
            config.train_size = train_size;
            config.val_size = val_size;
            config.test_size = test_size;
            const Alphabet alphabet = Alphabet::canonical();
            const HydropathyScale scale = HydropathyScale::load(scale_path, alphabet);
            const Dataset dataset = make_dataset(config, alphabet, scale);
            write_dataset(dataset, alphabet, out_dir);
            return dataset.bayes_ceiling;
        },
        py::arg("out_dir"), py::arg("seed"), py::arg("train_size") = 200, py::arg("val_size") = 50,
        py::arg("test_size") = 50, py::arg("scale_path") = "data/hydropathy_kd.tsv");

    m.def("hydropathy_score", [](const std::string& text, const std::string& scale_path) {
        const Alphabet alphabet = Alphabet::canonical();
        const HydropathyScale scale = HydropathyScale::load(scale_path, alphabet);
        return hydropathy_score(encode(text, alphabet), scale);
    });
}
