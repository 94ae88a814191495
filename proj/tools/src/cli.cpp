#include "cli.hpp"

#include "streamdiar/der.hpp"
#include "streamdiar/features.hpp"
#include "streamdiar/model.hpp"
#include "streamdiar/pipeline.hpp"
#include "streamdiar/rng.hpp"
#include "streamdiar/rttm.hpp"
#include "streamdiar/simulate.hpp"
#include "streamdiar/tensor_file.hpp"
#include "streamdiar/train.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace streamdiar::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

// Problems with the invocation itself (bad flags, malformed config files,
// missing required options) exit with 1; problems with the data exit with 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Configuration files
//
// Flat key=value text, one option per line, '#' or ';' comments. Values from
// the file fill any option the command line did not set, so flags always win.
// ---------------------------------------------------------------------------

std::string trim(const std::string& text) {
    auto begin = text.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return {};
    auto end = text.find_last_not_of(" \t\r");
    return text.substr(begin, end - begin + 1);
}

std::vector<std::string> split_whitespace(const std::string& text) {
    std::istringstream in(text);
    std::vector<std::string> parts;
    std::string part;
    while (in >> part) parts.push_back(part);
    return parts;
}

void apply_config(CLI::App& cmd, const std::string& path) {
    if (path.empty()) return;
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string entry = trim(line);
        if (entry.empty() || entry[0] == '#' || entry[0] == ';') continue;
        auto eq = entry.find('=');
        if (eq == std::string::npos) {
            throw UsageError(path + ": line " + std::to_string(lineno) + ": expected key=value");
        }
        std::string key = trim(entry.substr(0, eq));
        std::string value = trim(entry.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
            value = value.substr(1, value.size() - 2);
        }
        CLI::Option* option = cmd.get_option_no_throw("--" + key);
        if (option == nullptr) {
            throw UsageError(path + ": line " + std::to_string(lineno) + ": unknown option '"
                             + key + "'");
        }
        if (option->count() > 0) continue; // set on the command line
        if (option->get_items_expected_max() > 1) {
            for (const auto& part : split_whitespace(value)) option->add_result(part);
        } else {
            option->add_result(value);
        }
        option->run_callback();
    }
}

void require_set(const std::string& value, const std::string& flag) {
    if (value.empty()) throw UsageError(flag + " is required (flag or config file)");
}

// ---------------------------------------------------------------------------
// Run manifests
//
// Every run that creates files first writes a manifest next to them: the
// subcommand, the fully resolved configuration (reusable as a key=value
// config file), the seed, digests of the input files and the paths the run
// is about to produce. Writing it before the outputs means a crashed run
// still leaves a record of what it was attempting.
// ---------------------------------------------------------------------------

struct Manifest {
    std::string command;
    std::vector<std::pair<std::string, std::string>> config; // key, value
    std::uint64_t seed = 0;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
};

std::string digest_string(const std::string& path) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "fnv1a:%016llx",
                  static_cast<unsigned long long>(file_digest(path)));
    return buf;
}

// Serialises the resolved options (command line, config file or defaults) so
// the manifest doubles as a configuration snapshot.
std::vector<std::pair<std::string, std::string>> snapshot_config(const CLI::App& cmd) {
    std::vector<std::pair<std::string, std::string>> entries;
    std::istringstream text(cmd.config_to_str(true, false));
    std::string line;
    while (std::getline(text, line)) {
        if (line.empty() || line[0] == '#' || line[0] == '[') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
            value = value.substr(1, value.size() - 2);
        }
        entries.emplace_back(key, value);
    }
    return entries;
}

void write_manifest(const std::string& path, const Manifest& m) {
    ordered_json j;
    j["command"] = m.command;
    j["seed"] = m.seed;
    ordered_json cfg = ordered_json::object();
    for (const auto& [key, value] : m.config) cfg[key] = value;
    j["config"] = cfg;
    ordered_json inputs = ordered_json::array();
    for (const auto& p : m.inputs) {
        inputs.push_back(ordered_json{{"path", p}, {"digest", digest_string(p)}});
    }
    j["inputs"] = inputs;
    j["outputs"] = m.outputs;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write manifest: " + path);
    out << j.dump(2) << "\n";
    if (!out) throw std::runtime_error("failed writing manifest: " + path);
}

// ---------------------------------------------------------------------------
// Small shared helpers
// ---------------------------------------------------------------------------

index_t parse_context(const std::string& text) {
    if (text == "inf") return kInfiniteContext;
    return static_cast<index_t>(std::stoll(text));
}

const CLI::Validator kContextValidator(
    [](std::string& text) -> std::string {
        if (text == "inf") return {};
        try {
            std::size_t pos = 0;
            long long value = std::stoll(text, &pos);
            if (pos == text.size() && value >= 0) return {};
        } catch (...) {
        }
        return std::string("expected a non-negative integer or 'inf'");
    },
    "N|inf");

Variant parse_variant(const std::string& name) {
    if (name == "ul") return Variant::ul;
    if (name == "ll") return Variant::ll;
    return Variant::offline;
}

ShuffleMode parse_shuffle(const std::string& name) {
    if (name == "within") return ShuffleMode::within_block;
    if (name == "across") return ShuffleMode::across_blocks;
    return ShuffleMode::none;
}

std::string path_stem(const std::string& path) {
    std::string stem = fs::path(path).stem().string();
    return stem.empty() ? std::string("stream") : stem;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create directory " + dir + ": " + ec.message());
}

// WAV inputs run through the acoustic frontend (23-dim log-Mel, +-7 splice to
// 345 dims, x10 subsample to 100 ms frames); tensor feature files are fed to
// the model exactly as stored.
FeatureMatrix load_input_features(const std::string& path) {
    if (fs::path(path).extension() == ".wav") {
        return subsample(splice(logmel(read_wav(path))));
    }
    return load_features(path);
}

void save_labels(const std::string& path, const MatrixF& labels, double frame_period) {
    NamedTensors t;
    t.put("labels", labels);
    t.put_scalar("frame_period", static_cast<float>(frame_period));
    save_tensors(path, t);
}

std::vector<Segment> labels_to_segments(const MatrixF& labels, double frame_period) {
    std::vector<int> ids(static_cast<std::size_t>(labels.cols()));
    for (std::size_t s = 0; s < ids.size(); ++s) ids[s] = static_cast<int>(s);
    return posterior_to_segments(labels, ids, 0.5f, frame_period);
}

void save_posterior(const std::string& path, const DiarizationResult& result) {
    NamedTensors t;
    t.put("posterior", result.posterior);
    MatrixF ids(1, static_cast<index_t>(result.speaker_ids.size()));
    for (std::size_t i = 0; i < result.speaker_ids.size(); ++i) {
        ids.at(0, static_cast<index_t>(i)) = static_cast<float>(result.speaker_ids[i]);
    }
    t.put("speaker_ids", std::move(ids));
    t.put_scalar("frame_period", static_cast<float>(result.frame_period));
    if (!result.speakers_per_block.empty()) {
        MatrixF spb(1, static_cast<index_t>(result.speakers_per_block.size()));
        for (std::size_t i = 0; i < result.speakers_per_block.size(); ++i) {
            spb.at(0, static_cast<index_t>(i)) = static_cast<float>(result.speakers_per_block[i]);
        }
        t.put("speakers_per_block", std::move(spb));
    }
    save_tensors(path, t);
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateOpts {
    std::string config_path;
    int speakers = 2;
    long long frames = 200;
    double turn_frames = 15.0;
    double pause = 0.1;
    double overlap = 0.1;
    int dim = 16;
    double gain = 1.0;
    double noise = 0.3;
    std::uint64_t seed = 0;
    long long count = 1;
    bool audio = false;
    std::string out_dir;
    std::string prefix = "conv";
};

int run_simulate(CLI::App& cmd, SimulateOpts& opts) {
    apply_config(cmd, opts.config_path);
    require_set(opts.out_dir, "--out-dir");
    if (opts.count < 1) throw UsageError("--count must be at least 1");
    ensure_dir(opts.out_dir);

    std::vector<std::string> names;
    Manifest manifest;
    manifest.command = "simulate";
    manifest.config = snapshot_config(cmd);
    manifest.seed = opts.seed;
    for (long long i = 0; i < opts.count; ++i) {
        std::string base =
            (fs::path(opts.out_dir) / (opts.prefix + "_" + std::to_string(i))).string();
        names.push_back(base);
        manifest.outputs.push_back(base + (opts.audio ? ".wav" : ".feat"));
        manifest.outputs.push_back(base + ".labels");
        manifest.outputs.push_back(base + ".rttm");
    }
    write_manifest((fs::path(opts.out_dir) / "manifest.json").string(), manifest);

    for (long long i = 0; i < opts.count; ++i) {
        ConversationSpec spec;
        spec.n_speakers = opts.speakers;
        spec.total_frames = static_cast<index_t>(opts.frames);
        spec.mean_turn_frames = opts.turn_frames;
        spec.pause_ratio = opts.pause;
        spec.overlap_ratio = opts.overlap;
        spec.feature_dim = static_cast<index_t>(opts.dim);
        spec.emission_gain = opts.gain;
        spec.noise_sigma = opts.noise;
        spec.seed = Rng::derive(opts.seed, static_cast<std::uint64_t>(i));

        const std::string& base = names[static_cast<std::size_t>(i)];
        std::string rec_id = path_stem(base);
        MatrixF labels;
        double frame_period = 0.1;
        if (opts.audio) {
            AudioConversation conv = simulate_audio(spec);
            write_wav(base + ".wav", conv.audio);
            labels = conv.labels;
        } else {
            Conversation conv = simulate(spec);
            save_features(base + ".feat", conv.features);
            frame_period = conv.features.frame_period;
            labels = conv.labels;
        }
        save_labels(base + ".labels", labels, frame_period);
        SegmentList ref = to_segment_list(labels_to_segments(labels, frame_period), rec_id);
        write_rttm(base + ".rttm", {ref});

        TurnStats stats = turn_stats(labels);
        std::cout << rec_id << ": frames=" << labels.rows() << " speakers=" << labels.cols()
                  << " silence=" << stats.silence_fraction
                  << " overlap=" << stats.overlap_fraction << "\n";
    }
    std::cout << "wrote " << opts.count << " conversation(s) to " << opts.out_dir << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainOpts {
    std::string config_path;
    // model
    int layers = 2, d_model = 32, heads = 4, ff = 64;
    long long block_frames = 10;
    std::string context = "1";
    // data
    int speakers = 2;
    long long frames = 200;
    double turn_frames = 15.0, pause = 0.1, overlap = 0.1;
    int dim = 16;
    double gain = 1.0, noise = 0.3;
    long long conversations = 50;
    // optimisation
    std::string mode = "causal";
    long long steps = 500, batch = 1, warmup = 1000;
    double lr_scale = 1.0, dropout = 0.1, existence_weight = 1.0;
    bool no_shuffle = false;
    std::uint64_t seed = 0;
    // outputs
    std::string checkpoint_out;
    std::string log_path;
};

int run_train(CLI::App& cmd, TrainOpts& opts) {
    apply_config(cmd, opts.config_path);
    require_set(opts.checkpoint_out, "--checkpoint");

    EncoderConfig config;
    config.n_layers = opts.layers;
    config.d_model = opts.d_model;
    config.n_heads = opts.heads;
    config.d_ff = opts.ff;
    config.input_dim = opts.dim;
    config.block_frames = static_cast<index_t>(opts.block_frames);
    config.context_blocks = parse_context(opts.context);
    config.validate();

    TrainConfig tc;
    tc.mode = opts.mode == "offline" ? TrainMode::offline : TrainMode::causal;
    tc.steps = static_cast<index_t>(opts.steps);
    tc.batch_size = static_cast<index_t>(opts.batch);
    tc.warmup_steps = static_cast<index_t>(opts.warmup);
    tc.lr_scale = opts.lr_scale;
    tc.dropout = opts.dropout;
    tc.existence_weight = opts.existence_weight;
    tc.shuffle = !opts.no_shuffle;
    tc.seed = opts.seed;

    TrainDataConfig data;
    data.conversation.n_speakers = opts.speakers;
    data.conversation.total_frames = static_cast<index_t>(opts.frames);
    data.conversation.mean_turn_frames = opts.turn_frames;
    data.conversation.pause_ratio = opts.pause;
    data.conversation.overlap_ratio = opts.overlap;
    data.conversation.feature_dim = static_cast<index_t>(opts.dim);
    data.conversation.emission_gain = opts.gain;
    data.conversation.noise_sigma = opts.noise;
    data.n_conversations = static_cast<index_t>(opts.conversations);

    Manifest manifest;
    manifest.command = "train";
    manifest.config = snapshot_config(cmd);
    manifest.seed = opts.seed;
    manifest.outputs.push_back(opts.checkpoint_out);
    if (!opts.log_path.empty()) manifest.outputs.push_back(opts.log_path);
    write_manifest(opts.checkpoint_out + ".manifest.json", manifest);

    std::ofstream log_file;
    std::ostream* log = nullptr;
    if (!opts.log_path.empty()) {
        log_file.open(opts.log_path, std::ios::binary);
        if (!log_file) throw std::runtime_error("cannot write log: " + opts.log_path);
        log = &log_file;
    }

    TrainResult result = train(config, tc, data, log);
    save_checkpoint(opts.checkpoint_out, result.params);

    if (!result.history.empty()) {
        std::cout << "first " << format_metrics(result.history.front()) << "\n";
        std::cout << "last  " << format_metrics(result.history.back()) << "\n";
    }
    std::cout << "saved checkpoint " << opts.checkpoint_out << " ("
              << result.params.parameter_count() << " parameters)\n";
    return 0;
}

// ---------------------------------------------------------------------------
// infer
// ---------------------------------------------------------------------------

struct InferOpts {
    std::string config_path;
    std::string checkpoint;
    std::vector<std::string> inputs;
    std::string out_dir = ".";
    std::string rttm_out;
    std::string posterior_out;
    std::string recording_id;
    std::string variant = "offline";
    std::string shuffle = "none";
    std::string context;
    double block_seconds = 0.0;
    double tau = 0.5;
    double threshold = 0.5;
    long long max_speakers = 10;
    std::uint64_t seed = 0;
    int jobs = 1;
    bool reorder = false;
    bool average = false;
    bool no_posterior = false;
};

int run_infer(CLI::App& cmd, InferOpts& opts) {
    apply_config(cmd, opts.config_path);
    require_set(opts.checkpoint, "--checkpoint");
    if ((!opts.rttm_out.empty() || !opts.posterior_out.empty() || !opts.recording_id.empty()) &&
        opts.inputs.size() != 1) {
        throw UsageError(
            "--rttm/--posterior/--recording-id apply to a single input; use --out-dir for batches");
    }
    ModelParamsF params = load_checkpoint(opts.checkpoint);

    struct Job {
        std::string input, rttm, posterior, rec_id;
        std::string summary;
    };
    std::vector<Job> jobs_list;
    for (const auto& input : opts.inputs) {
        Job job;
        job.input = input;
        std::string stem = path_stem(input);
        job.rec_id = opts.recording_id.empty() ? stem : opts.recording_id;
        job.rttm = !opts.rttm_out.empty() ? opts.rttm_out
                                          : (fs::path(opts.out_dir) / (stem + ".rttm")).string();
        if (!opts.no_posterior) {
            job.posterior = !opts.posterior_out.empty()
                                ? opts.posterior_out
                                : (fs::path(opts.out_dir) / (stem + ".post")).string();
        }
        jobs_list.push_back(std::move(job));
    }

    std::string manifest_path;
    if (!opts.rttm_out.empty()) {
        manifest_path = opts.rttm_out + ".manifest.json";
    } else {
        ensure_dir(opts.out_dir);
        manifest_path = (fs::path(opts.out_dir) / "manifest.json").string();
    }

    Manifest manifest;
    manifest.command = "infer";
    manifest.config = snapshot_config(cmd);
    manifest.seed = opts.seed;
    manifest.inputs.push_back(opts.checkpoint);
    for (const auto& job : jobs_list) manifest.inputs.push_back(job.input);
    for (const auto& job : jobs_list) {
        manifest.outputs.push_back(job.rttm);
        if (!job.posterior.empty()) manifest.outputs.push_back(job.posterior);
    }
    write_manifest(manifest_path, manifest);

    auto process = [&](Job& job) {
        FeatureMatrix features = load_input_features(job.input);
        InferenceConfig cfg;
        cfg.variant = parse_variant(opts.variant);
        cfg.tau = static_cast<float>(opts.tau);
        cfg.activity_threshold = static_cast<float>(opts.threshold);
        cfg.max_speakers = static_cast<index_t>(opts.max_speakers);
        cfg.heuristics.reorder = opts.reorder;
        cfg.heuristics.average = opts.average;
        cfg.heuristics.shuffle = parse_shuffle(opts.shuffle);
        cfg.shuffle_seed = opts.seed;
        if (!opts.context.empty()) cfg.context_blocks = parse_context(opts.context);
        if (opts.block_seconds > 0.0) {
            auto frames =
                static_cast<index_t>(std::llround(opts.block_seconds / features.frame_period));
            if (frames < 1) {
                throw std::runtime_error("--block-seconds shorter than one frame ("
                                         + std::to_string(features.frame_period) + " s)");
            }
            cfg.block_frames = frames;
        }

        DiarizationResult result = run_inference(features, params, cfg);
        write_rttm(job.rttm, {to_segment_list(result.segments, job.rec_id)});
        if (!job.posterior.empty()) save_posterior(job.posterior, result);

        std::ostringstream line;
        line << job.input << ": frames=" << result.posterior.rows()
             << " speakers=" << result.speaker_ids.size()
             << " segments=" << result.segments.size() << " -> " << job.rttm;
        job.summary = line.str();
    };

    int n_workers = static_cast<int>(std::min<std::size_t>(
        static_cast<std::size_t>(std::max(opts.jobs, 1)), jobs_list.size()));
    std::vector<std::string> errors;
    if (n_workers <= 1) {
        for (auto& job : jobs_list) {
            try {
                process(job);
            } catch (const std::exception& e) {
                errors.push_back(job.input + ": " + e.what());
            }
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::mutex err_mu;
        auto worker = [&]() {
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= jobs_list.size()) break;
                try {
                    process(jobs_list[i]);
                } catch (const std::exception& e) {
                    std::lock_guard<std::mutex> lock(err_mu);
                    errors.push_back(jobs_list[i].input + ": " + e.what());
                }
            }
        };
        std::vector<std::thread> threads;
        threads.reserve(static_cast<std::size_t>(n_workers));
        for (int t = 0; t < n_workers; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }

    for (const auto& job : jobs_list) {
        if (!job.summary.empty()) std::cout << job.summary << "\n";
    }
    if (!errors.empty()) {
        std::string joined;
        for (const auto& e : errors) joined += (joined.empty() ? "" : "; ") + e;
        throw std::runtime_error(joined);
    }
    return 0;
}

// ---------------------------------------------------------------------------
// score
// ---------------------------------------------------------------------------

struct ScoreOpts {
    std::string config_path;
    std::string ref, hyp, out;
    double collar = 0.25;
};

int run_score(CLI::App& cmd, ScoreOpts& opts) {
    apply_config(cmd, opts.config_path);
    require_set(opts.ref, "--ref");
    require_set(opts.hyp, "--hyp");

    std::vector<SegmentList> refs = read_rttm(opts.ref);
    std::vector<SegmentList> hyps = read_rttm(opts.hyp);

    std::map<std::string, const SegmentList*> hyp_by_id;
    for (const auto& h : hyps) hyp_by_id[h.recording_id] = &h;
    std::map<std::string, bool> ref_ids;
    for (const auto& r : refs) ref_ids[r.recording_id] = true;
    for (const auto& h : hyps) {
        if (!ref_ids.count(h.recording_id)) {
            throw std::runtime_error("hypothesis recording '" + h.recording_id
                                     + "' has no reference");
        }
    }

    std::vector<DerReportRow> rows;
    DerBreakdown total;
    for (const auto& ref : refs) {
        SegmentList empty_hyp;
        empty_hyp.recording_id = ref.recording_id;
        auto it = hyp_by_id.find(ref.recording_id);
        const SegmentList& hyp = it == hyp_by_id.end() ? empty_hyp : *it->second;
        DerBreakdown b = der(ref, hyp, opts.collar);
        total += b;
        std::map<std::string, bool> ref_speakers;
        for (const auto& seg : ref.segments) ref_speakers[seg.speaker] = true;
        rows.push_back({ref.recording_id, "S=" + std::to_string(ref_speakers.size()), b});
    }
    rows.push_back({"TOTAL", "", total});
    std::string table = format_der_table(rows);

    std::cout << table;
    if (!opts.out.empty()) {
        Manifest manifest;
        manifest.command = "score";
        manifest.config = snapshot_config(cmd);
        manifest.inputs = {opts.ref, opts.hyp};
        manifest.outputs = {opts.out};
        write_manifest(opts.out + ".manifest.json", manifest);
        std::ofstream out(opts.out, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + opts.out);
        out << table;
    }
    return 0;
}

// ---------------------------------------------------------------------------
// viz
// ---------------------------------------------------------------------------

struct VizOpts {
    std::string rttm;
};

int run_viz(VizOpts& opts) {
    std::vector<SegmentList> lists = read_rttm(opts.rttm);
    bool first = true;
    for (const auto& list : lists) {
        if (!first) std::cout << "\n";
        first = false;

        double end = 0.0;
        std::vector<std::string> speakers;
        for (const auto& seg : list.segments) {
            end = std::max(end, seg.onset + seg.duration);
            if (std::find(speakers.begin(), speakers.end(), seg.speaker) == speakers.end()) {
                speakers.push_back(seg.speaker);
            }
        }
        auto seconds = static_cast<long long>(std::ceil(end));
        seconds = std::max<long long>(seconds, 1);
        std::size_t width = 0;
        for (const auto& s : speakers) width = std::max(width, s.size());

        std::cout << list.recording_id << " (" << seconds << " s, one column per second)\n";
        for (const auto& speaker : speakers) {
            std::string row(static_cast<std::size_t>(seconds), '.');
            for (const auto& seg : list.segments) {
                if (seg.speaker != speaker) continue;
                auto lo = static_cast<long long>(std::floor(seg.onset));
                auto hi = static_cast<long long>(std::ceil(seg.onset + seg.duration));
                for (long long s = std::max(0ll, lo); s < std::min(seconds, hi); ++s) {
                    row[static_cast<std::size_t>(s)] = '#';
                }
            }
            std::cout << "  " << speaker << std::string(width - speaker.size(), ' ') << " |"
                      << row << "|\n";
        }
    }
    return 0;
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

struct BenchOpts {
    std::string config_path;
    std::vector<long long> frames{1000, 2000};
    int runs = 5;
    std::string checkpoint;
    std::string variant = "ul";
    long long block_frames = 100;
    std::string context = "1";
    int layers = 2, d_model = 32, heads = 4, ff = 64, dim = 16;
    std::uint64_t seed = 0;
};

int run_bench(CLI::App& cmd, BenchOpts& opts) {
    apply_config(cmd, opts.config_path);
    ModelParamsF params = [&]() {
        if (!opts.checkpoint.empty()) return load_checkpoint(opts.checkpoint);
        EncoderConfig config;
        config.n_layers = opts.layers;
        config.d_model = opts.d_model;
        config.n_heads = opts.heads;
        config.d_ff = opts.ff;
        config.input_dim = opts.dim;
        config.block_frames = static_cast<index_t>(opts.block_frames);
        config.context_blocks = parse_context(opts.context);
        config.validate();
        return ModelParamsF::init(config, opts.seed);
    }();

    InferenceConfig cfg;
    cfg.variant = parse_variant(opts.variant);
    cfg.block_frames = static_cast<index_t>(opts.block_frames);
    cfg.context_blocks = parse_context(opts.context);

    double prev_median = 0.0;
    for (std::size_t fi = 0; fi < opts.frames.size(); ++fi) {
        long long stream_frames = opts.frames[fi];
        Rng rng(Rng::derive(opts.seed, static_cast<std::uint64_t>(stream_frames)));
        MatrixF frames(static_cast<index_t>(stream_frames), params.config.input_dim);
        for (auto& v : frames.storage()) v = static_cast<float>(rng.normal());
        FeatureMatrix features = synthetic_features(std::move(frames));

        std::vector<double> times;
        for (int r = 0; r < opts.runs; ++r) {
            auto start = std::chrono::steady_clock::now();
            DiarizationResult result = run_inference(features, params, cfg);
            auto stop = std::chrono::steady_clock::now();
            (void)result;
            times.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
        }
        std::sort(times.begin(), times.end());
        double median = times[times.size() / 2];

        std::cout << "T=" << stream_frames << " median_ms=" << median << " runs=" << opts.runs;
        if (fi > 0 && prev_median > 0.0) std::cout << " ratio_vs_prev=" << median / prev_median;
        std::cout << "\n";
        prev_median = median;
    }
    return 0;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

struct GradOpts {
    std::uint64_t seed = 0;
    long long samples = 50;
    double step = 1e-5;
    double tol = 1e-4;
};

int run_gradcheck(GradOpts& opts) {
    GradCheckReport report = grad_check(opts.seed, static_cast<index_t>(opts.samples), opts.step);
    std::cout << "checked=" << report.checked << " max_rel_err=" << report.max_rel_err
              << " tol=" << opts.tol << " -> " << (report.max_rel_err < opts.tol ? "ok" : "FAIL")
              << "\n";
    if (!(report.max_rel_err < opts.tol)) {
        throw std::runtime_error("gradient check failed: max relative error "
                                 + std::to_string(report.max_rel_err) + " exceeds "
                                 + std::to_string(opts.tol));
    }
    return 0;
}

void add_config_option(CLI::App* cmd, std::string& target) {
    cmd->add_option("--config", target, "flat key=value defaults; flags override");
}

} // namespace

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

int run(int argc, const char* const* argv) {
    CLI::App app{"blockwise streaming speaker diarization toolkit"};
    app.require_subcommand(1);

    SimulateOpts sim;
    auto* sim_cmd = app.add_subcommand("simulate", "Generate synthetic conversations");
    add_config_option(sim_cmd, sim.config_path);
    sim_cmd->add_option("--speakers", sim.speakers, "number of speakers")->capture_default_str();
    sim_cmd->add_option("--frames", sim.frames, "conversation length in frames")
        ->capture_default_str();
    sim_cmd->add_option("--turn-frames", sim.turn_frames, "mean turn length in frames")
        ->capture_default_str();
    sim_cmd->add_option("--pause", sim.pause, "target silent fraction")->capture_default_str();
    sim_cmd->add_option("--overlap", sim.overlap, "target overlapped fraction of speech")
        ->capture_default_str();
    sim_cmd->add_option("--dim", sim.dim, "feature dimension")->capture_default_str();
    sim_cmd->add_option("--gain", sim.gain, "speaker emission gain")->capture_default_str();
    sim_cmd->add_option("--noise", sim.noise, "noise sigma")->capture_default_str();
    sim_cmd->add_option("--seed", sim.seed, "master seed")->capture_default_str();
    sim_cmd->add_option("--count", sim.count, "number of conversations")->capture_default_str();
    sim_cmd->add_flag("--audio", sim.audio, "write sinusoid WAV audio instead of features");
    sim_cmd->add_option("--out-dir", sim.out_dir, "output directory (required)");
    sim_cmd->add_option("--prefix", sim.prefix, "output file prefix")->capture_default_str();

    TrainOpts tr;
    auto* tr_cmd = app.add_subcommand("train", "Train a model on synthetic conversations");
    add_config_option(tr_cmd, tr.config_path);
    tr_cmd->add_option("--layers", tr.layers, "encoder layers")->capture_default_str();
    tr_cmd->add_option("--d-model", tr.d_model, "model width")->capture_default_str();
    tr_cmd->add_option("--heads", tr.heads, "attention heads")->capture_default_str();
    tr_cmd->add_option("--ff", tr.ff, "feed-forward width")->capture_default_str();
    tr_cmd->add_option("--block-frames", tr.block_frames, "block size W in frames")
        ->capture_default_str();
    tr_cmd->add_option("--context-blocks", tr.context, "left context L")
        ->check(kContextValidator)
        ->capture_default_str();
    tr_cmd->add_option("--speakers", tr.speakers, "speakers per conversation")
        ->capture_default_str();
    tr_cmd->add_option("--frames", tr.frames, "frames per conversation")->capture_default_str();
    tr_cmd->add_option("--turn-frames", tr.turn_frames, "mean turn length")
        ->capture_default_str();
    tr_cmd->add_option("--pause", tr.pause, "target silent fraction")->capture_default_str();
    tr_cmd->add_option("--overlap", tr.overlap, "target overlapped fraction")
        ->capture_default_str();
    tr_cmd->add_option("--dim", tr.dim, "feature dimension (model input)")
        ->capture_default_str();
    tr_cmd->add_option("--gain", tr.gain, "speaker emission gain")->capture_default_str();
    tr_cmd->add_option("--noise", tr.noise, "noise sigma")->capture_default_str();
    tr_cmd->add_option("--conversations", tr.conversations, "training set size")
        ->capture_default_str();
    tr_cmd->add_option("--mode", tr.mode, "training forward pass")
        ->check(CLI::IsMember({"causal", "offline"}))
        ->capture_default_str();
    tr_cmd->add_option("--steps", tr.steps, "optimiser steps")->capture_default_str();
    tr_cmd->add_option("--batch", tr.batch, "conversations per step")->capture_default_str();
    tr_cmd->add_option("--warmup", tr.warmup, "learning-rate warmup steps")
        ->capture_default_str();
    tr_cmd->add_option("--lr-scale", tr.lr_scale, "learning-rate scale")->capture_default_str();
    tr_cmd->add_option("--dropout", tr.dropout, "dropout rate")->capture_default_str();
    tr_cmd->add_option("--existence-weight", tr.existence_weight, "existence loss weight")
        ->capture_default_str();
    tr_cmd->add_flag("--no-shuffle", tr.no_shuffle, "feed frames to the attractor in order");
    tr_cmd->add_option("--seed", tr.seed, "master seed")->capture_default_str();
    tr_cmd->add_option("--checkpoint", tr.checkpoint_out, "checkpoint output path (required)");
    tr_cmd->add_option("--log", tr.log_path, "per-step metrics log path");

    InferOpts inf;
    auto* inf_cmd = app.add_subcommand("infer", "Diarize WAV or feature files");
    add_config_option(inf_cmd, inf.config_path);
    inf_cmd->add_option("--checkpoint", inf.checkpoint, "model checkpoint (required)");
    inf_cmd->add_option("inputs", inf.inputs, "WAV or feature files")->required();
    inf_cmd->add_option("--out-dir", inf.out_dir, "output directory")->capture_default_str();
    inf_cmd->add_option("--rttm", inf.rttm_out, "RTTM output path (single input)");
    inf_cmd->add_option("--posterior", inf.posterior_out,
                        "posterior output path (single input)");
    inf_cmd->add_option("--recording-id", inf.recording_id, "RTTM recording id (single input)");
    inf_cmd->add_option("--variant", inf.variant, "inference variant")
        ->check(CLI::IsMember({"ul", "ll", "offline"}))
        ->capture_default_str();
    inf_cmd->add_option("--block-seconds", inf.block_seconds,
                        "block size in seconds (0 keeps the model default)")
        ->capture_default_str();
    inf_cmd->add_option("--context-blocks", inf.context,
                        "left context L (default: model value)")
        ->check(kContextValidator);
    inf_cmd->add_flag("--reorder", inf.reorder, "align attractors to the previous block");
    inf_cmd->add_flag("--average", inf.average, "average matched attractors");
    inf_cmd->add_option("--shuffle", inf.shuffle, "attractor input shuffle")
        ->check(CLI::IsMember({"none", "within", "across"}))
        ->capture_default_str();
    inf_cmd->add_option("--tau", inf.tau, "attractor existence threshold")
        ->capture_default_str();
    inf_cmd->add_option("--threshold", inf.threshold, "posterior activity threshold")
        ->capture_default_str();
    inf_cmd->add_option("--max-speakers", inf.max_speakers, "attractor cap")
        ->capture_default_str();
    inf_cmd->add_option("--seed", inf.seed, "shuffle seed")->capture_default_str();
    inf_cmd->add_option("--jobs", inf.jobs, "parallel workers for multiple inputs")
        ->capture_default_str();
    inf_cmd->add_flag("--no-posterior", inf.no_posterior, "skip posterior tensor output");

    ScoreOpts sc;
    auto* sc_cmd = app.add_subcommand("score", "Score hypothesis RTTM against a reference");
    add_config_option(sc_cmd, sc.config_path);
    sc_cmd->add_option("--ref", sc.ref, "reference RTTM (required)");
    sc_cmd->add_option("--hyp", sc.hyp, "hypothesis RTTM (required)");
    sc_cmd->add_option("--collar", sc.collar, "scoring collar in seconds")
        ->capture_default_str();
    sc_cmd->add_option("--out", sc.out, "also write the table to this path");

    VizOpts viz;
    auto* viz_cmd = app.add_subcommand("viz", "ASCII activity chart of an RTTM file");
    viz_cmd->add_option("rttm", viz.rttm, "RTTM file")->required();

    BenchOpts bench;
    auto* bench_cmd = app.add_subcommand("bench", "Time inference across stream lengths");
    add_config_option(bench_cmd, bench.config_path);
    bench_cmd->add_option("--frames", bench.frames, "stream lengths to time")
        ->capture_default_str();
    bench_cmd->add_option("--runs", bench.runs, "repetitions per length (median reported)")
        ->capture_default_str();
    bench_cmd->add_option("--checkpoint", bench.checkpoint, "optional model checkpoint");
    bench_cmd->add_option("--variant", bench.variant, "inference variant")
        ->check(CLI::IsMember({"ul", "ll", "offline"}))
        ->capture_default_str();
    bench_cmd->add_option("--block-frames", bench.block_frames, "block size W")
        ->capture_default_str();
    bench_cmd->add_option("--context-blocks", bench.context, "left context L")
        ->check(kContextValidator)
        ->capture_default_str();
    bench_cmd->add_option("--layers", bench.layers, "encoder layers (random model)")
        ->capture_default_str();
    bench_cmd->add_option("--d-model", bench.d_model, "model width (random model)")
        ->capture_default_str();
    bench_cmd->add_option("--heads", bench.heads, "attention heads (random model)")
        ->capture_default_str();
    bench_cmd->add_option("--ff", bench.ff, "feed-forward width (random model)")
        ->capture_default_str();
    bench_cmd->add_option("--dim", bench.dim, "input dimension (random model)")
        ->capture_default_str();
    bench_cmd->add_option("--seed", bench.seed, "seed for the random model and features")
        ->capture_default_str();

    GradOpts grad;
    auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
    grad_cmd->add_option("--seed", grad.seed, "seed")->capture_default_str();
    grad_cmd->add_option("--samples", grad.samples, "parameters to probe")
        ->capture_default_str();
    grad_cmd->add_option("--step", grad.step, "finite-difference step")->capture_default_str();
    grad_cmd->add_option("--tol", grad.tol, "maximum relative error")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (sim_cmd->parsed()) return run_simulate(*sim_cmd, sim);
        if (tr_cmd->parsed()) return run_train(*tr_cmd, tr);
        if (inf_cmd->parsed()) return run_infer(*inf_cmd, inf);
        if (sc_cmd->parsed()) return run_score(*sc_cmd, sc);
        if (viz_cmd->parsed()) return run_viz(viz);
        if (bench_cmd->parsed()) return run_bench(*bench_cmd, bench);
        if (grad_cmd->parsed()) return run_gradcheck(grad);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

} // namespace streamdiar::cli
