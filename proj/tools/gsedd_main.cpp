#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "gsedd/checks.hpp"
#include "gsedd/eval.hpp"
#include "gsedd/io.hpp"
#include "gsedd/model.hpp"
#include "gsedd/repertoire.hpp"
#include "gsedd/runconfig.hpp"
#include "gsedd/sampler.hpp"
#include "gsedd/train.hpp"

namespace fs = std::filesystem;
using namespace gsedd;

namespace {

struct CommonArgs {
    std::string config_path;
    uint64_t seed = 0;
    bool seed_set = false;
    std::string out_dir = "out";
};

RunConfig effective_config(const CommonArgs& args) {
    RunConfig config = args.config_path.empty() ? RunConfig{} : load_run_config(args.config_path);
    if (args.seed_set) {
        config.seed = args.seed;
        config.sim.seed = args.seed;
    }
    return config;
}

void echo_config(const RunConfig& config, const fs::path& out_dir) {
    atomic_write_file(out_dir / "config_effective.json", run_config_json(config));
}

ScoreFn model_score_fn(const ScoreModel& model, bool use_ema) {
    return [&model, use_ema](const TokenSequence& x, std::optional<double> t) {
        return model.forward(x, t, use_ema);
    };
}

std::string format_gamma(double gamma) {
    std::ostringstream out;
    out << gamma;
    return out.str();
}

int cmd_gen_data(const CommonArgs& args) {
    RunConfig config = effective_config(args);
    const Alphabet alphabet = Alphabet::canonical();
    const HydropathyScale scale = HydropathyScale::load(config.scale_path, alphabet);
    const Dataset dataset = make_dataset(config.sim, alphabet, scale);
    write_dataset(dataset, alphabet, args.out_dir);
    echo_config(config, args.out_dir);
    std::cout << "wrote " << dataset.train.size() << "/" << dataset.val.size() << "/"
              << dataset.test.size() << " train/val/test records to " << args.out_dir << "\n";
    std::cout << "bayes_ceiling " << dataset.bayes_ceiling << "\n";
    return 0;
}

int cmd_train(const CommonArgs& args, const std::string& data_dir, const std::string& resume) {
    RunConfig config = effective_config(args);
    const Alphabet alphabet = Alphabet::canonical();
    const std::string data = data_dir.empty() ? config.data_dir : data_dir;
    if (data.empty())
        throw std::invalid_argument("train: no dataset; pass --data or set paths.data_dir");
    const Dataset dataset = read_dataset(data, alphabet);

    config.model.alphabet_size = alphabet.size();
    ScoreModel model = resume.empty() ? ScoreModel::init(config.model, config.seed)
                                      : load_checkpoint(resume);
    if (!resume.empty() && model.config.variant != config.model.variant)
        throw std::invalid_argument("train: checkpoint variant disagrees with config");

    config.train.seed = derive_seed(config.seed, "train");
    const NoiseSchedule schedule;
    std::vector<MetricsRow> rows;
    const TrainResult result = train_loop(
        config.train, config.model.variant, alphabet, pairs_of(dataset.train),
        pairs_of(dataset.val), model, schedule, [&](const MetricsRow& row) {
            std::cout << "step " << row.step << " " << row.split << " loss " << row.loss << "\n";
        });

    fs::create_directories(args.out_dir);
    save_checkpoint(model, fs::path(args.out_dir) / "checkpoint.gsedd");
    atomic_write_file(fs::path(args.out_dir) / "metrics.csv", metrics_csv(result.log));
    echo_config(config, args.out_dir);
    std::cout << "checkpoint at step " << model.step << " written to " << args.out_dir << "\n";
    return 0;
}

int cmd_sample(const CommonArgs& args, const std::string& checkpoint_path,
               const std::string& gamma_list, const std::string& classifier_path,
               const std::string& germlines_path, const std::string& data_dir, int num,
               int length, int steps_flag, const std::string& decoder_flag) {
    RunConfig config = effective_config(args);
    const Alphabet alphabet = Alphabet::canonical();
    if (checkpoint_path.empty()) throw std::invalid_argument("sample: --checkpoint is required");
    const ScoreModel model = load_checkpoint(checkpoint_path);

    if (steps_flag > 0) config.sampler.steps = steps_flag;
    if (!decoder_flag.empty()) config.sampler.decoder = decoder_from_name(decoder_flag);

    std::vector<double> gammas;
    {
        std::istringstream in(gamma_list);
        std::string item;
        while (std::getline(in, item, ','))
            if (!item.empty()) gammas.push_back(std::stod(item));
        if (gammas.empty()) gammas.push_back(config.sampler.gamma);
    }

    std::unique_ptr<Classifier> classifier;
    if (!classifier_path.empty()) classifier = load_classifier(classifier_path, alphabet);
    for (double g : gammas)
        if (g > 0.0 && !classifier)
            throw std::invalid_argument("sample: positive gamma requires --classifier");

    std::vector<TokenSequence> germlines;
    if (model.config.variant == KernelVariant::germline_absorbing) {
        if (germlines_path.empty())
            throw std::invalid_argument("sample: germline variant requires --germlines FILE");
        std::istringstream in(read_file(germlines_path));
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '>' || line[0] == '#') continue;
            germlines.push_back(encode(line, alphabet));
        }
        if (germlines.empty()) throw std::invalid_argument("sample: no germlines in file");
    }

    std::vector<std::string> references;
    if (!data_dir.empty()) {
        const Dataset dataset = read_dataset(data_dir, alphabet);
        for (const auto& rec : dataset.train) references.push_back(decode(rec.pair.observed, alphabet));
    }
    const HydropathyScale scale = HydropathyScale::load(config.scale_path, alphabet);
    const NoiseSchedule schedule;

    fs::create_directories(args.out_dir);
    std::string summary = "gamma,n,nn_identity,pairwise_diversity,mean_property,classifier_evals\n";
    for (double gamma : gammas) {
        SamplerConfig sampler_config = config.sampler;
        sampler_config.gamma = gamma;
        SampleStats stats;
        std::vector<std::string> sequences;
        std::string fasta;
        for (int k = 0; k < num; ++k) {
            sampler_config.seed = derive_seed(config.seed, "sample", static_cast<uint64_t>(k));
            TransitionKernel kernel = [&]() {
                switch (model.config.variant) {
                    case KernelVariant::uniform: return TransitionKernel::uniform(alphabet);
                    case KernelVariant::mask_absorbing: return TransitionKernel::mask_absorbing(alphabet);
                    default:
                        return TransitionKernel::germline_absorbing(
                            alphabet, germlines[static_cast<size_t>(k) % germlines.size()]);
                }
            }();
            const std::optional<int> len =
                model.config.variant == KernelVariant::germline_absorbing
                    ? std::optional<int>()
                    : std::optional<int>(length);
            const TokenSequence seq = sample(model, kernel, sampler_config, len,
                                             gamma > 0.0 ? classifier.get() : nullptr, schedule,
                                             &stats);
            const std::string text = decode(seq, alphabet);
            fasta += ">sample_" + std::to_string(k) + " seed=" + std::to_string(sampler_config.seed) +
                     " steps=" + std::to_string(sampler_config.steps) +
                     " gamma=" + format_gamma(gamma) + "\n" + text + "\n";
            sequences.push_back(text);
        }
        atomic_write_file(fs::path(args.out_dir) / ("samples_gamma" + format_gamma(gamma) + ".fasta"),
                          fasta);
        double mean_property = 0.0;
        for (const auto& text : sequences)
            mean_property += hydropathy_score(encode(text, alphabet), scale);
        mean_property /= static_cast<double>(sequences.size());

        std::ostringstream row;
        row.precision(8);
        row << format_gamma(gamma) << ',' << sequences.size() << ',';
        if (!references.empty()) row << nn_identity(sequences, references);
        row << ',';
        if (sequences.size() >= 2) row << pairwise_diversity(sequences);
        row << ',' << mean_property << ',' << stats.classifier_evals << '\n';
        summary += row.str();
    }
    atomic_write_file(fs::path(args.out_dir) / "summary.csv", summary);
    echo_config(config, args.out_dir);
    std::cout << "wrote " << num << " samples per gamma to " << args.out_dir << "\n";
    return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& checkpoint_path,
             const std::string& data_dir, int max_eval_seqs, const std::string& split) {
    RunConfig config = effective_config(args);
    const Alphabet alphabet = Alphabet::canonical();
    if (checkpoint_path.empty()) throw std::invalid_argument("eval: --checkpoint is required");
    const std::string data = data_dir.empty() ? config.data_dir : data_dir;
    if (data.empty()) throw std::invalid_argument("eval: no dataset; pass --data");
    const ScoreModel model = load_checkpoint(checkpoint_path);
    const Dataset dataset = read_dataset(data, alphabet);
    const std::vector<Record>& records = split == "val" ? dataset.val : dataset.test;
    std::vector<GermlinePair> pairs = pairs_of(records);

    const NoiseSchedule schedule;
    config.elbo.seed = derive_seed(config.seed, "elbo");
    std::vector<GermlinePair> elbo_pairs = pairs;
    if (static_cast<int>(elbo_pairs.size()) > max_eval_seqs)
        elbo_pairs.resize(static_cast<size_t>(max_eval_seqs));

    const ElboResult elbo = elbo_perplexity(model_score_fn(model, true), model.config.variant,
                                            alphabet, elbo_pairs, config.elbo, schedule);
    const double accuracy = non_germline_accuracy(model_score_fn(model, true),
                                                  model.config.variant, alphabet, pairs,
                                                  derive_seed(config.seed, "ngacc"));

    const std::string hash = config_hash(config);
    std::ostringstream report;
    report.precision(8);
    report << "metric,value,n,config_hash\n";
    report << "elbo_perplexity," << elbo.aggregate << ',' << elbo_pairs.size() << ',' << hash << '\n';
    report << "non_germline_accuracy," << accuracy << ',' << pairs.size() << ',' << hash << '\n';
    report << "bayes_ceiling," << dataset.bayes_ceiling << ',' << records.size() << ',' << hash << '\n';
    fs::create_directories(args.out_dir);
    atomic_write_file(fs::path(args.out_dir) / "report.csv", report.str());
    echo_config(config, args.out_dir);
    std::cout << report.str();
    return 0;
}

int cmd_oracle_check(const CommonArgs& args, bool flip_sigma_sign) {
    const auto results = checks::run_oracle_suite(flip_sigma_sign);
    std::ostringstream report;
    report.precision(6);
    report << "check,tolerance,observed,pass\n";
    bool all_pass = true;
    for (const auto& r : results) {
        report << r.name << ',' << r.tolerance << ',' << r.observed << ','
               << (r.pass ? "PASS" : "FAIL") << '\n';
        all_pass &= r.pass;
    }
    std::cout << report.str();
    if (!args.out_dir.empty()) {
        fs::create_directories(args.out_dir);
        atomic_write_file(fs::path(args.out_dir) / "oracle_report.csv", report.str());
    }
    std::cout << (all_pass ? "oracle suite: PASS\n" : "oracle suite: FAIL\n");
    return all_pass ? 0 : 2;
}

int cmd_fit_probe(const CommonArgs& args, const std::string& data_dir, const std::string& label,
                  const std::string& out_file) {
    RunConfig config = effective_config(args);
    const Alphabet alphabet = Alphabet::canonical();
    const std::string data = data_dir.empty() ? config.data_dir : data_dir;
    if (data.empty()) throw std::invalid_argument("fit-probe: no dataset; pass --data");
    const Dataset dataset = read_dataset(data, alphabet);

    auto labeled = [&](const std::vector<Record>& records) {
        std::vector<LabeledSequence> out;
        for (const auto& rec : records)
            out.push_back({rec.pair.observed,
                           label == "v_class" ? static_cast<double>(rec.v_class) : rec.hydropathy});
        return out;
    };
    int d_max = 0;
    for (const auto& rec : dataset.train)
        d_max = std::max(d_max, static_cast<int>(rec.pair.observed.size()));
    const ProbeTask task = label == "v_class" ? ProbeTask::multiclass : ProbeTask::regression;
    int classes = 1;
    if (task == ProbeTask::multiclass) {
        for (const auto& rec : dataset.train) classes = std::max(classes, rec.v_class + 1);
    }
    ProbeFitConfig fit_config;
    fit_config.seed = derive_seed(config.seed, "probe");
    const ProbeFitResult result = fit_linear_probe(labeled(dataset.train), labeled(dataset.val),
                                                   task, classes, d_max, alphabet.size(), fit_config);

    fs::create_directories(args.out_dir);
    const fs::path out_path = out_file.empty() ? fs::path(args.out_dir) / "classifier.json"
                                               : fs::path(out_file);
    // hydropathy probes guide toward lower values
    save_probe_classifier(result.probe, 0, task == ProbeTask::regression ? -1.0 : 1.0, out_path);
    std::string log = "step,train_loss,val_loss\n";
    for (const auto& row : result.log)
        log += std::to_string(row.step) + "," + std::to_string(row.train_loss) + "," +
               std::to_string(row.val_loss) + "\n";
    atomic_write_file(fs::path(args.out_dir) / "probe_log.csv", log);
    std::cout << "probe best validation loss " << result.best_val_loss << " written to "
              << out_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"germline score-entropy discrete diffusion"};
    app.require_subcommand(1);

    CommonArgs common;
    auto add_common = [&common](CLI::App* cmd) {
        cmd->add_option("--config", common.config_path, "run configuration file (JSON)");
        cmd->add_option("--seed", common.seed, "global seed override")
            ->each([&common](const std::string&) { common.seed_set = true; });
        cmd->add_option("--out", common.out_dir, "output directory");
    };

    auto* gen = app.add_subcommand("gen-data", "generate the synthetic repertoire");
    add_common(gen);

    auto* train = app.add_subcommand("train", "train a score model");
    add_common(train);
    std::string train_data, train_resume;
    train->add_option("--data", train_data, "dataset directory (from gen-data)");
    train->add_option("--resume", train_resume, "checkpoint to resume from");

    auto* sampler_cmd = app.add_subcommand("sample", "sample sequences from a checkpoint");
    add_common(sampler_cmd);
    std::string ckpt, gamma_list, classifier_path, germlines_path, sample_data, decoder_flag;
    int num = 16, length = 44, steps_flag = 0;
    sampler_cmd->add_option("--checkpoint", ckpt, "model checkpoint");
    sampler_cmd->add_option("--steps", steps_flag, "sampling steps (default 128)");
    sampler_cmd->add_option("--decoder", decoder_flag, "euler or tweedie");
    sampler_cmd->add_option("--gamma", gamma_list, "guidance strength list, e.g. 0,2,8");
    sampler_cmd->add_option("--classifier", classifier_path, "classifier spec (JSON)");
    sampler_cmd->add_option("--germlines", germlines_path, "germline sequences, one per line");
    sampler_cmd->add_option("--num", num, "samples per gamma");
    sampler_cmd->add_option("--length", length, "sequence length for uniform/mask variants");
    sampler_cmd->add_option("--data", sample_data, "dataset directory for nearest-neighbor refs");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(eval_cmd);
    std::string eval_ckpt, eval_data, eval_split = "test";
    int max_eval_seqs = 64;
    eval_cmd->add_option("--checkpoint", eval_ckpt, "model checkpoint");
    eval_cmd->add_option("--data", eval_data, "dataset directory");
    eval_cmd->add_option("--max-eval-seqs", max_eval_seqs, "cap on ELBO sequences");
    eval_cmd->add_option("--split", eval_split, "test or val");

    auto* oracle_cmd = app.add_subcommand("oracle-check", "run the brute-force oracle suite");
    add_common(oracle_cmd);
    bool flip_sigma_sign = false;
    oracle_cmd->add_flag("--flip-sigma-sign", flip_sigma_sign)->group("");  // test hook

    auto* probe_cmd = app.add_subcommand("fit-probe", "fit a linear guidance probe");
    add_common(probe_cmd);
    std::string probe_data, probe_label = "hydropathy", probe_out;
    probe_cmd->add_option("--data", probe_data, "dataset directory");
    probe_cmd->add_option("--label", probe_label, "hydropathy or v_class");
    probe_cmd->add_option("--out-file", probe_out, "classifier output path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(common);
        if (train->parsed()) return cmd_train(common, train_data, train_resume);
        if (sampler_cmd->parsed())
            return cmd_sample(common, ckpt, gamma_list, classifier_path, germlines_path,
                              sample_data, num, length, steps_flag, decoder_flag);
        if (eval_cmd->parsed()) return cmd_eval(common, eval_ckpt, eval_data, max_eval_seqs, eval_split);
        if (oracle_cmd->parsed()) return cmd_oracle_check(common, flip_sigma_sign);
        if (probe_cmd->parsed()) return cmd_fit_probe(common, probe_data, probe_label, probe_out);
    } catch (const NumericError& err) {
        std::cerr << "numeric failure: " << err.what() << "\n";
        return 2;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 1;
    }
    return 1;
}
