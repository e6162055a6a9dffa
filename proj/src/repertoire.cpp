#include "gsedd/repertoire.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gsedd/io.hpp"

namespace gsedd {

void SimConfig::validate() const {
    if (v_families < 1 || v_alleles < 1 || v_length < 1 || d_segments < 1 || d_length < 1 ||
        j_segments < 1 || j_length < 1)
        throw std::invalid_argument("SimConfig: segment counts and lengths must be positive");
    if (v_hotspots < 0 || v_hotspots > v_length || j_hotspots < 0 || j_hotspots > j_length)
        throw std::invalid_argument("SimConfig: hotspot counts exceed segment length");
    if (hotspot_rate < 0.0 || hotspot_rate > 1.0 || background_rate < 0.0 || background_rate > 1.0)
        throw std::invalid_argument("SimConfig: rates must lie in [0,1]");
    if (hotspot_rate < background_rate)
        throw std::invalid_argument("SimConfig: hotspot rate must be >= background rate");
    if (spectrum_concentration <= 0.0 || spectrum_concentration >= 1.0)
        throw std::invalid_argument("SimConfig: spectrum_concentration must be in (0,1)");
    if (allele_mass < 0.0 || allele_mass > 1.0)
        throw std::invalid_argument("SimConfig: allele_mass must lie in [0,1]");
    if (train_size < 1 || val_size < 0 || test_size < 0)
        throw std::invalid_argument("SimConfig: split sizes must be non-negative (train >= 1)");
    if (identity_threshold <= 0.0 || identity_threshold > 1.0)
        throw std::invalid_argument("SimConfig: identity_threshold must be in (0,1]");
}

namespace {

std::vector<int> amino_tokens(const Alphabet& alphabet) {
    std::vector<int> out;
    for (int id = 0; id < alphabet.size(); ++id)
        if (!alphabet.is_mask(id)) out.push_back(id);
    return out;
}

std::vector<int> pick_distinct(Rng& rng, int count, int limit) {
    std::vector<int> all(static_cast<size_t>(limit));
    std::iota(all.begin(), all.end(), 0);
    for (int i = 0; i < count; ++i) {
        const int j = i + rng.uniform_int(limit - i);
        std::swap(all[static_cast<size_t>(i)], all[static_cast<size_t>(j)]);
    }
    all.resize(static_cast<size_t>(count));
    std::sort(all.begin(), all.end());
    return all;
}

}  // namespace

GermlineLibrary gen_germline_library(const SimConfig& config, const Alphabet& alphabet) {
    config.validate();
    const auto aminos = amino_tokens(alphabet);
    const int na = static_cast<int>(aminos.size());
    GermlineLibrary lib;

    Rng vrng(derive_seed(config.seed, "library.v"));
    for (int fam = 0; fam < config.v_families; ++fam) {
        TokenSequence base(static_cast<size_t>(config.v_length));
        for (auto& tok : base) tok = aminos[static_cast<size_t>(vrng.uniform_int(na))];
        const std::vector<int> hotspots = pick_distinct(vrng, config.v_hotspots, config.v_length);
        // one distinct token per allele at every hotspot offset
        std::vector<std::vector<int>> allele_tokens;
        for (int h = 0; h < config.v_hotspots; ++h) {
            std::vector<int> toks;
            while (static_cast<int>(toks.size()) < config.v_alleles) {
                const int tok = aminos[static_cast<size_t>(vrng.uniform_int(na))];
                if (std::find(toks.begin(), toks.end(), tok) == toks.end()) toks.push_back(tok);
            }
            allele_tokens.push_back(std::move(toks));
        }
        for (int a = 0; a < config.v_alleles; ++a) {
            Segment seg;
            seg.tokens = base;
            seg.hotspots = hotspots;
            seg.family = fam;
            for (int h = 0; h < config.v_hotspots; ++h)
                seg.tokens[static_cast<size_t>(hotspots[static_cast<size_t>(h)])] =
                    allele_tokens[static_cast<size_t>(h)][static_cast<size_t>(a)];
            lib.v_pool.push_back(std::move(seg));
        }
    }

    Rng drng(derive_seed(config.seed, "library.d"));
    for (int k = 0; k < config.d_segments; ++k) {
        Segment seg;
        seg.tokens.resize(static_cast<size_t>(config.d_length));
        for (auto& tok : seg.tokens) tok = aminos[static_cast<size_t>(drng.uniform_int(na))];
        lib.d_pool.push_back(std::move(seg));
    }

    Rng jrng(derive_seed(config.seed, "library.j"));
    for (int k = 0; k < config.j_segments; ++k) {
        Segment seg;
        seg.tokens.resize(static_cast<size_t>(config.j_length));
        for (auto& tok : seg.tokens) tok = aminos[static_cast<size_t>(jrng.uniform_int(na))];
        seg.hotspots = pick_distinct(jrng, config.j_hotspots, config.j_length);
        lib.j_pool.push_back(std::move(seg));
    }
    return lib;
}

Recombination recombine(const GermlineLibrary& library, Rng& rng) {
    if (library.v_pool.empty() || library.d_pool.empty() || library.j_pool.empty())
        throw std::invalid_argument("recombine: empty segment pool");
    Recombination rec;
    rec.v_index = rng.uniform_int(static_cast<int>(library.v_pool.size()));
    rec.d_index = rng.uniform_int(static_cast<int>(library.d_pool.size()));
    rec.j_index = rng.uniform_int(static_cast<int>(library.j_pool.size()));
    const auto& v = library.v_pool[static_cast<size_t>(rec.v_index)].tokens;
    const auto& d = library.d_pool[static_cast<size_t>(rec.d_index)].tokens;
    const auto& j = library.j_pool[static_cast<size_t>(rec.j_index)].tokens;
    rec.germline.reserve(v.size() + d.size() + j.size());
    rec.germline.insert(rec.germline.end(), v.begin(), v.end());
    rec.germline.insert(rec.germline.end(), d.begin(), d.end());
    rec.germline.insert(rec.germline.end(), j.begin(), j.end());
    return rec;
}

namespace {

// Token-keyed mutation spectrum over targets != g: two preferred targets get
// concentration and 0.6*(1-concentration), the rest share what remains.
std::vector<double> base_spectrum(int g, const SimConfig& config, const Alphabet& alphabet,
                                  const std::vector<int>& aminos) {
    Rng rng(derive_seed(config.seed, "spectrum", static_cast<uint64_t>(g)));
    std::vector<int> targets;
    for (int tok : aminos)
        if (tok != g) targets.push_back(tok);
    const int t1 = rng.uniform_int(static_cast<int>(targets.size()));
    int t2 = t1;
    while (t2 == t1) t2 = rng.uniform_int(static_cast<int>(targets.size()));

    std::vector<double> row(static_cast<size_t>(alphabet.size()), 0.0);
    const double c1 = config.spectrum_concentration;
    const double c2 = 0.6 * (1.0 - c1);
    const double rest = (1.0 - c1 - c2) / static_cast<double>(targets.size() - 2);
    for (size_t k = 0; k < targets.size(); ++k) row[static_cast<size_t>(targets[k])] = rest;
    row[static_cast<size_t>(targets[static_cast<size_t>(t1)])] = c1;
    row[static_cast<size_t>(targets[static_cast<size_t>(t2)])] = c2;
    return row;
}

}  // namespace

MutationModel build_mutation_model(const GermlineLibrary& library, const Recombination& rec,
                                   const SimConfig& config, const Alphabet& alphabet) {
    const auto aminos = amino_tokens(alphabet);
    const Segment& v = library.v_pool[static_cast<size_t>(rec.v_index)];
    const Segment& j = library.j_pool[static_cast<size_t>(rec.j_index)];
    const int d = static_cast<int>(rec.germline.size());
    const int v_len = static_cast<int>(v.tokens.size());
    const int dj_offset = v_len + static_cast<int>(
        library.d_pool[static_cast<size_t>(rec.d_index)].tokens.size());

    MutationModel model;
    model.rates.assign(static_cast<size_t>(d), config.background_rate);
    model.spectra.resize(static_cast<size_t>(d));

    std::set<int> hot;
    for (int h : v.hotspots) hot.insert(h);
    for (int h : j.hotspots) hot.insert(dj_offset + h);
    for (int pos : hot) model.rates[static_cast<size_t>(pos)] = config.hotspot_rate;

    for (int pos = 0; pos < d; ++pos) {
        const int g = rec.germline[static_cast<size_t>(pos)];
        std::vector<double> row = base_spectrum(g, config, alphabet, aminos);
        if (config.allele_mass > 0.0 && pos < v_len &&
            std::find(v.hotspots.begin(), v.hotspots.end(), pos) != v.hotspots.end()) {
            // divert mass toward the other alleles' tokens at this offset
            std::vector<int> others;
            for (const Segment& seg : library.v_pool) {
                if (seg.family != v.family) continue;
                const int tok = seg.tokens[static_cast<size_t>(pos)];
                if (tok != g && std::find(others.begin(), others.end(), tok) == others.end())
                    others.push_back(tok);
            }
            if (!others.empty()) {
                for (double& p : row) p *= 1.0 - config.allele_mass;
                for (int tok : others)
                    row[static_cast<size_t>(tok)] +=
                        config.allele_mass / static_cast<double>(others.size());
            }
        }
        model.spectra[static_cast<size_t>(pos)] = std::move(row);
    }
    return model;
}

TokenSequence hypermutate(const TokenSequence& germline, const MutationModel& model, Rng& rng) {
    if (germline.size() != model.rates.size() || germline.size() != model.spectra.size())
        throw std::invalid_argument("hypermutate: model shape mismatch");
    TokenSequence observed = germline;
    for (size_t i = 0; i < germline.size(); ++i) {
        if (rng.uniform() >= model.rates[i]) continue;
        observed[i] = rng.categorical(model.spectra[i]);
    }
    return observed;
}

namespace {

struct ComboAssignment {
    // allowed (v,d,j) combos per split
    std::vector<std::array<int, 3>> combos[3];
};

ComboAssignment assign_combos(const GermlineLibrary& library, const SimConfig& config,
                              const Alphabet& alphabet) {
    const int nv = static_cast<int>(library.v_pool.size());
    const int nd = static_cast<int>(library.d_pool.size());
    const int nj = static_cast<int>(library.j_pool.size());
    std::vector<std::array<int, 3>> combos;
    std::vector<std::string> germs;
    for (int v = 0; v < nv; ++v)
        for (int d = 0; d < nd; ++d)
            for (int j = 0; j < nj; ++j) {
                combos.push_back({v, d, j});
                TokenSequence g = library.v_pool[static_cast<size_t>(v)].tokens;
                const auto& dt = library.d_pool[static_cast<size_t>(d)].tokens;
                const auto& jt = library.j_pool[static_cast<size_t>(j)].tokens;
                g.insert(g.end(), dt.begin(), dt.end());
                g.insert(g.end(), jt.begin(), jt.end());
                germs.push_back(decode(g, alphabet));
            }

    // single-linkage clusters over identity > threshold
    const size_t m = combos.size();
    std::vector<size_t> parent(m);
    std::iota(parent.begin(), parent.end(), size_t{0});
    std::function<size_t(size_t)> find = [&](size_t a) {
        while (parent[a] != a) a = parent[a] = parent[parent[a]];
        return a;
    };
    for (size_t a = 0; a < m; ++a)
        for (size_t b = a + 1; b < m; ++b)
            if (sequence_identity(germs[a], germs[b]) > config.identity_threshold)
                parent[find(a)] = find(b);

    std::vector<std::vector<size_t>> clusters;
    {
        std::vector<long> root_to_cluster(m, -1);
        for (size_t a = 0; a < m; ++a) {
            const size_t r = find(a);
            if (root_to_cluster[r] < 0) {
                root_to_cluster[r] = static_cast<long>(clusters.size());
                clusters.emplace_back();
            }
            clusters[static_cast<size_t>(root_to_cluster[r])].push_back(a);
        }
    }

    const double sizes[3] = {static_cast<double>(config.train_size),
                             static_cast<double>(config.val_size),
                             static_cast<double>(config.test_size)};
    const double total_records = sizes[0] + sizes[1] + sizes[2];
    // largest clusters first, each to the split with the biggest deficit
    std::sort(clusters.begin(), clusters.end(),
              [](const auto& a, const auto& b) {
                  return a.size() != b.size() ? a.size() > b.size() : a.front() < b.front();
              });
    double assigned[3] = {0.0, 0.0, 0.0};
    ComboAssignment out;
    for (const auto& cluster : clusters) {
        int best = 0;
        double best_deficit = -1e300;
        for (int s = 0; s < 3; ++s) {
            if (sizes[s] <= 0.0) continue;
            const double deficit = sizes[s] / total_records -
                                   assigned[s] / static_cast<double>(m);
            if (deficit > best_deficit) {
                best_deficit = deficit;
                best = s;
            }
        }
        for (size_t idx : cluster) out.combos[best].push_back(combos[idx]);
        assigned[best] += static_cast<double>(cluster.size());
    }
    const char* names[3] = {"train", "val", "test"};
    for (int s = 0; s < 3; ++s)
        if (sizes[s] > 0.0 && out.combos[s].empty())
            throw std::invalid_argument(
                std::string("make_dataset: identity constraint leaves no germlines for the ") +
                names[s] + " split; try a smaller test fraction or fewer clusters per family");
    return out;
}

}  // namespace

Dataset make_dataset(const SimConfig& config, const Alphabet& alphabet,
                     const HydropathyScale& scale) {
    config.validate();
    const GermlineLibrary library = gen_germline_library(config, alphabet);
    const ComboAssignment assignment = assign_combos(library, config, alphabet);

    Dataset dataset;
    dataset.config = config;
    const char* names[3] = {"train", "val", "test"};
    const int sizes[3] = {config.train_size, config.val_size, config.test_size};
    std::vector<Record>* outs[3] = {&dataset.train, &dataset.val, &dataset.test};

    double ceiling_sum = 0.0;
    int64_t ceiling_count = 0;
    for (int s = 0; s < 3; ++s) {
        const auto& allowed = assignment.combos[s];
        for (int k = 0; k < sizes[s]; ++k) {
            Rng rng(derive_seed(config.seed, std::string("record.") + names[s],
                                static_cast<uint64_t>(k)));
            Record rec;
            for (int attempt = 0;; ++attempt) {
                if (attempt > 1000)
                    throw std::runtime_error("make_dataset: selection filter rejected 1000 draws");
                const auto& combo = allowed[static_cast<size_t>(
                    rng.uniform_int(static_cast<int>(allowed.size())))];
                Recombination r;
                r.v_index = combo[0];
                r.d_index = combo[1];
                r.j_index = combo[2];
                const auto& v = library.v_pool[static_cast<size_t>(r.v_index)].tokens;
                const auto& dseg = library.d_pool[static_cast<size_t>(r.d_index)].tokens;
                const auto& jseg = library.j_pool[static_cast<size_t>(r.j_index)].tokens;
                r.germline.reserve(v.size() + dseg.size() + jseg.size());
                r.germline.insert(r.germline.end(), v.begin(), v.end());
                r.germline.insert(r.germline.end(), dseg.begin(), dseg.end());
                r.germline.insert(r.germline.end(), jseg.begin(), jseg.end());

                const MutationModel model = build_mutation_model(library, r, config, alphabet);
                const TokenSequence observed = hypermutate(r.germline, model, rng);
                const double hydro = hydropathy_score(observed, scale);
                if (config.selection_strength > 0.0) {
                    const double accept = std::exp(-config.selection_strength * (hydro + 4.5));
                    if (rng.uniform() >= std::min(1.0, accept)) continue;
                }
                rec.pair = GermlinePair{r.germline, observed,
                                        std::string(names[s]) + "_" + std::to_string(k)};
                rec.v_class = r.v_index;
                rec.hydropathy = hydro;
                if (s == 2) {
                    for (size_t i = 0; i < observed.size(); ++i) {
                        if (observed[i] == r.germline[i]) continue;
                        const auto& row = model.spectra[i];
                        ceiling_sum += *std::max_element(row.begin(), row.end());
                        ++ceiling_count;
                    }
                }
                break;
            }
            outs[s]->push_back(std::move(rec));
        }
    }
    dataset.bayes_ceiling = ceiling_count > 0 ? ceiling_sum / static_cast<double>(ceiling_count) : 0.0;
    return dataset;
}

namespace {

std::string format_double(double v) {
    std::ostringstream out;
    out.precision(6);
    out << std::fixed << v;
    return out.str();
}

std::string split_tsv(const std::vector<Record>& records, const Alphabet& alphabet) {
    std::string out = "id\tgermline\tobserved\tv_class\thydropathy\n";
    for (const auto& rec : records) {
        out += rec.pair.id;
        out += '\t';
        out += decode(rec.pair.germline, alphabet);
        out += '\t';
        out += decode(rec.pair.observed, alphabet);
        out += '\t';
        out += std::to_string(rec.v_class);
        out += '\t';
        out += format_double(rec.hydropathy);
        out += '\n';
    }
    return out;
}

std::vector<Record> parse_tsv(const std::string& text, const Alphabet& alphabet) {
    std::vector<Record> out;
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "id\tgermline\tobserved\tv_class\thydropathy")
        throw std::runtime_error("dataset: bad TSV header");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string id, germ, obs, vclass, hydro;
        if (!std::getline(row, id, '\t') || !std::getline(row, germ, '\t') ||
            !std::getline(row, obs, '\t') || !std::getline(row, vclass, '\t') ||
            !std::getline(row, hydro, '\t'))
            throw std::runtime_error("dataset: bad TSV row '" + line + "'");
        Record rec;
        rec.pair = make_pair_checked(encode(germ, alphabet), encode(obs, alphabet), id, alphabet);
        rec.v_class = std::stoi(vclass);
        rec.hydropathy = std::stod(hydro);
        out.push_back(std::move(rec));
    }
    return out;
}

nlohmann::json sim_config_json(const SimConfig& c) {
    return nlohmann::json{{"v_families", c.v_families},
                          {"v_alleles", c.v_alleles},
                          {"v_length", c.v_length},
                          {"v_hotspots", c.v_hotspots},
                          {"d_segments", c.d_segments},
                          {"d_length", c.d_length},
                          {"j_segments", c.j_segments},
                          {"j_length", c.j_length},
                          {"j_hotspots", c.j_hotspots},
                          {"hotspot_rate", c.hotspot_rate},
                          {"background_rate", c.background_rate},
                          {"spectrum_concentration", c.spectrum_concentration},
                          {"allele_mass", c.allele_mass},
                          {"selection_strength", c.selection_strength},
                          {"train_size", c.train_size},
                          {"val_size", c.val_size},
                          {"test_size", c.test_size},
                          {"identity_threshold", c.identity_threshold},
                          {"seed", c.seed}};
}

}  // namespace

void write_dataset(const Dataset& dataset, const Alphabet& alphabet,
                   const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    atomic_write_file(dir / "train.tsv", split_tsv(dataset.train, alphabet));
    atomic_write_file(dir / "val.tsv", split_tsv(dataset.val, alphabet));
    atomic_write_file(dir / "test.tsv", split_tsv(dataset.test, alphabet));
    nlohmann::json meta;
    meta["sim"] = sim_config_json(dataset.config);
    meta["bayes_ceiling"] = dataset.bayes_ceiling;
    meta["alphabet"] = alphabet.symbols();
    atomic_write_file(dir / "metadata.json", meta.dump(2) + "\n");
}

Dataset read_dataset(const std::filesystem::path& dir, const Alphabet& alphabet) {
    Dataset dataset;
    dataset.train = parse_tsv(read_file(dir / "train.tsv"), alphabet);
    dataset.val = parse_tsv(read_file(dir / "val.tsv"), alphabet);
    dataset.test = parse_tsv(read_file(dir / "test.tsv"), alphabet);
    const nlohmann::json meta = nlohmann::json::parse(read_file(dir / "metadata.json"));
    dataset.bayes_ceiling = meta.at("bayes_ceiling").get<double>();
    return dataset;
}

std::vector<GermlinePair> pairs_of(const std::vector<Record>& records) {
    std::vector<GermlinePair> out;
    out.reserve(records.size());
    for (const auto& rec : records) out.push_back(rec.pair);
    return out;
}

}  // namespace gsedd
