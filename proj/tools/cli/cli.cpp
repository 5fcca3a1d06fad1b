// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli/cli.hpp"

#include <atomic>
#include <csignal>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <pthread.h>
#include <spdlog/spdlog.h>

#include "matfuse/core/config.hpp"
#include "matfuse/core/image_io.hpp"
#include "matfuse/denoiser/backend.hpp"
#include "matfuse/errors.hpp"
#include "matfuse/eval/clip.hpp"
#include "matfuse/eval/dataset.hpp"
#include "matfuse/eval/lpips.hpp"
#include "matfuse/eval/similarity.hpp"
#include "matfuse/pipeline/artifacts.hpp"
#include "matfuse/service/service.hpp"

// After Eigen: <resolv.h> defines a `_res` macro.
#include <httplib.h>

namespace matfuse::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Thrown to leave a command with a specific exit code.
struct Exit {
    int code;
    std::string message;
};

std::atomic<bool> g_interrupted{false};

extern "C" void on_interrupt(int) { g_interrupted = true; }

/// SIGINT/SIGTERM request cancellation at the next step boundary.
class InterruptScope {
public:
    InterruptScope() {
        g_interrupted = false;
        struct sigaction sa {};
        sa.sa_handler = on_interrupt;
        sigemptyset(&sa.sa_mask);
        sigaction(SIGINT, &sa, &m_old_int);
        sigaction(SIGTERM, &sa, &m_old_term);
    }
    ~InterruptScope() {
        sigaction(SIGINT, &m_old_int, nullptr);
        sigaction(SIGTERM, &m_old_term, nullptr);
    }

private:
    struct sigaction m_old_int {};
    struct sigaction m_old_term {};
};

struct BackendFlags {
    std::string backend = "toy";
    std::string weights_dir;
    std::uint64_t backend_seed = 0;
    std::size_t size = kDefaultImageSize;

    void add(CLI::App& app) {
        app.add_option("--backend", backend, "denoiser backend: toy or pretrained")
            ->check(CLI::IsMember({"toy", "pretrained"}))
            ->capture_default_str();
        app.add_option("--weights-dir", weights_dir, "pretrained weights root (default: $MATFUSE_WEIGHTS_DIR)");
        app.add_option("--backend-seed", backend_seed, "toy backend weight seed")->capture_default_str();
        app.add_option("--size", size, "toy backend image size in pixels")->capture_default_str();
    }

    BackendSpec spec() const {
        BackendSpec s;
        s.kind = parse_backend_kind(backend);
        s.seed = backend_seed;
        s.image_size = size;
        if (!weights_dir.empty())
            s.weights_dir = weights_dir;
        return s;
    }
};

/// Config file plus per-field flag overrides.
struct ConfigFlags {
    std::string config_path;
    double w = 0, lam = 0, v_self = 0, v_feat = 0, r_lower = 0, r_upper = 0;
    int tau_g = 0, tau_m = 0, steps = 0;
    std::int64_t seed = 0;
    std::vector<std::pair<CLI::Option*, std::function<json()>>> fields;
    std::vector<std::string> keys;

    template <typename T>
    void field(CLI::App& app, const std::string& flag, const std::string& key, T& target, const std::string& help) {
        fields.emplace_back(app.add_option(flag, target, help), [&target] { return json(target); });
        keys.push_back(key);
    }

    void add(CLI::App& app, bool with_lambda = true) {
        app.add_option("--config", config_path, "JSON config file; flags override its values")
            ->check(CLI::ExistingFile);
        field(app, "--w", "w", w, "classifier-free guidance scale");
        if (with_lambda)
            field(app, "--lambda", "lam", lam, "material transfer force");
        field(app, "--v-self", "v_self", v_self, "self-attention guider scale");
        field(app, "--v-feat", "v_feat", v_feat, "feature guider scale");
        field(app, "--tau-g", "tau_g", tau_g, "guided steps");
        field(app, "--tau-m", "tau_m", tau_m, "background-blended steps");
        field(app, "--r-lower", "r_lower", r_lower, "lower rescale bound");
        field(app, "--r-upper", "r_upper", r_upper, "upper rescale bound");
        field(app, "--steps", "T", steps, "DDIM steps");
        field(app, "--seed", "seed", seed, "sampling seed");
    }

    /// defaults < config file < flags.
    TransferConfig resolve() const {
        json merged = json::object();
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            try {
                in >> merged;
            } catch (const json::exception& e) {
                throw ValidationError("config", config_path + " is not valid JSON: " + e.what());
            }
            if (!merged.is_object())
                throw ValidationError("config", config_path + " must hold a JSON object");
        }
        for (std::size_t i = 0; i < fields.size(); ++i)
            if (fields[i].first->count())
                merged[keys[i]] = fields[i].second();
        return make_config(merged);
    }
};

struct InputFlags {
    std::string image, mask, material, src_prompt, trg_prompt;

    void add(CLI::App& app) {
        app.add_option("--image", image, "object image (PNG/JPEG)")->required()->check(CLI::ExistingFile);
        app.add_option("--mask", mask, "object mask, white = object")->required()->check(CLI::ExistingFile);
        app.add_option("--material", material, "material exemplar image")->required()->check(CLI::ExistingFile);
        app.add_option("--src-prompt", src_prompt, "prompt describing the input image")->required();
        app.add_option("--trg-prompt", trg_prompt, "prompt describing the edit");
    }
};

struct RunFlags {
    std::string out;
    bool force = false;
    bool no_cache = false;
    std::string cache_dir;
    int preview_every = 10;

    void add(CLI::App& app, bool previews = true) {
        app.add_option("--out", out, "output run directory")->required();
        app.add_flag("--force", force, "overwrite a non-empty output directory");
        app.add_flag("--no-cache", no_cache, "do not read or write the inversion cache");
        app.add_option("--cache-dir", cache_dir, "inversion cache root (default: $MATFUSE_CACHE_DIR)");
        if (previews)
            app.add_option("--preview-every", preview_every, "preview cadence in steps, 0 disables")
                ->check(CLI::NonNegativeNumber)
                ->capture_default_str();
    }

    std::optional<TrajectoryCache> cache() const {
        if (no_cache)
            return std::nullopt;
        return TrajectoryCache(cache_dir.empty() ? default_cache_dir() : fs::path(cache_dir));
    }
};

std::vector<double> parse_lambda_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        if (b == std::string::npos)
            continue;
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item.substr(b), &used));
            if (item.find_first_not_of(" \t", b + used) != std::string::npos)
                throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ValidationError("lambdas", "not a number: '" + item + "'");
        }
    }
    if (out.empty())
        throw ValidationError("lambdas", "lambda list is empty");
    return out;
}

std::unique_ptr<Denoiser> load_backend(const BackendSpec& spec) {
    try {
        return make_backend(spec);
    } catch (const BackendError& e) {
        throw Exit{kExitBackend, fmt::format("backend load failed ({}): {}", e.component(), e.what())};
    }
}

/// Inputs resized to the backend resolution.
TransferRequest load_request(const InputFlags& in, const TransferConfig& config, const BackendManifest& manifest) {
    const GridSize size{manifest.image_height, manifest.image_width};
    TransferRequest req;
    try {
        req.x_init = load_image(in.image, size);
        req.object_mask = load_mask(in.mask, size);
        req.y_im = load_image(in.material);
    } catch (const IoError& e) {
        throw Exit{kExitUsage, e.what()};
    }
    req.prompts.source = in.src_prompt;
    req.prompts.target = in.trg_prompt;
    req.config = config;
    req.validate();
    return req;
}

TransferHooks cli_hooks(int preview_every) {
    TransferHooks hooks;
    hooks.preview_every = preview_every > 0 ? preview_every : 1;
    hooks.cancelled = [] { return g_interrupted.load(); };
    return hooks;
}

void print_result(std::ostream& out, const std::string& key, const std::string& value) {
    out << "RESULT " << key << ' ' << value << '\n';
}

int cmd_transfer(const BackendFlags& bf, const ConfigFlags& cf, const InputFlags& in, const RunFlags& rf,
                 std::ostream& out) {
    const TransferConfig config = cf.resolve();
    print_result(out, "config", to_json(config).dump());
    auto backend = load_backend(bf.spec());
    const TransferRequest req = load_request(in, config, backend->manifest());
    RunDirectory run = RunDirectory::create(rf.out, rf.force);
    const auto cache = rf.cache();

    InterruptScope interrupts;
    RunOptions opts;
    opts.cache = cache ? &*cache : nullptr;
    opts.write_previews = rf.preview_every > 0;
    const TransferResult result = run_transfer(req, *backend, run, opts, cli_hooks(rf.preview_every));
    std::size_t passes = 0;
    for (const auto& s : result.steps)
        passes += s.passes;
    print_result(out, "run_dir", run.root().string());
    print_result(out, "passes", std::to_string(passes));
    print_result(out, "result", run.result_path().string());
    return kExitOk;
}

int cmd_sweep(const BackendFlags& bf, const ConfigFlags& cf, const InputFlags& in, const RunFlags& rf,
              const std::string& lambda_text, int parallel, std::ostream& out) {
    const std::vector<double> lambdas = parse_lambda_list(lambda_text);
    const TransferConfig config = cf.resolve();
    print_result(out, "config", to_json(config).dump());
    const BackendSpec spec = bf.spec();
    auto backend = load_backend(spec);
    const TransferRequest req = load_request(in, config, backend->manifest());
    RunDirectory top = RunDirectory::create(rf.out, rf.force);
    const auto cache = rf.cache();

    InterruptScope interrupts;
    top.write_inputs(req);
    bool hit = false;
    const InversionTrajectory traj = cache ? cache->obtain(req, *backend, &hit) : invert_request(req, *backend);
    top.write_trajectory(traj, config.T);
    print_result(out, "trajectory_cache_hit", hit ? "true" : "false");

    std::vector<std::string> names;
    for (std::size_t i = 0; i < lambdas.size(); ++i)
        names.push_back(fmt::format("{:02}_lambda_{}", i, lambdas[i]));

    std::vector<TransferResult> results;
    if (parallel > 1) {
        results = lambda_sweep_parallel(req, [&spec] { return make_backend(spec); }, traj, lambdas, parallel);
        for (std::size_t i = 0; i < results.size(); ++i) {
            RunDirectory sub = RunDirectory::create(top.root() / names[i], true);
            for (const auto& s : results[i].steps)
                sub.append_step(s);
        }
    } else {
        for (std::size_t i = 0; i < lambdas.size(); ++i) {
            TransferRequest item = req;
            item.config.lam = lambdas[i];
            RunDirectory sub = RunDirectory::create(top.root() / names[i], true);
            TransferHooks hooks = cli_hooks(rf.preview_every);
            hooks.on_step = [&sub](const StepRecord& r) { sub.append_step(r); };
            if (rf.preview_every > 0)
                hooks.on_preview = [&sub](int step, const ImageRGB& img) { sub.write_preview(step, img); };
            results.push_back(material_transfer(item, *backend, traj, hooks));
        }
    }

    json index = json::array();
    std::vector<ImageRGB> tiles;
    for (std::size_t i = 0; i < results.size(); ++i) {
        const fs::path dir = top.root() / names[i];
        write_file_atomic(dir / "result.png", encode_png(results[i].x_edit));
        json doc = {{"config", to_json(results[i].config)},
                    {"backend", results[i].backend_manifest},
                    {"lambda", lambdas[i]},
                    {"sweep_index", i},
                    {"trajectory", "../trajectory"},
                    {"trajectory_cache_hit", hit},
                    {"prompts", {{"source", req.prompts.source}, {"target", req.prompts.target}}}};
        write_file_atomic(dir / "manifest.json", doc.dump(2) + "\n");
        index.push_back({{"lambda", lambdas[i]}, {"dir", names[i]}});
        tiles.push_back(results[i].x_edit);
        print_result(out, "sweep_item", fmt::format("{} {}", lambdas[i], (dir / "result.png").string()));
    }
    const fs::path sheet = top.root() / "contact_sheet.png";
    write_file_atomic(sheet, encode_png(hconcat(tiles)));
    write_file_atomic(top.root() / "sweep.json",
                      json{{"lambdas", lambdas}, {"items", index}, {"inversions", 1}}.dump(2) + "\n");
    print_result(out, "contact_sheet", sheet.string());
    return kExitOk;
}

int cmd_invert(const BackendFlags& bf, int steps, const std::string& image, const std::string& src_prompt,
               const std::string& out_dir, bool force, const std::string& cache_dir, std::ostream& out) {
    // Only the step count affects the trajectory.
    const TransferConfig config = make_config({{"T", steps}, {"tau_g", 0}, {"tau_m", 0}});
    auto backend = load_backend(bf.spec());
    const BackendManifest& manifest = backend->manifest();
    TransferRequest req;
    req.x_init = load_image(image, GridSize{manifest.image_height, manifest.image_width});
    req.object_mask = BinaryMask(manifest.image_height, manifest.image_width, 1);
    req.y_im = req.x_init;
    req.prompts.source = src_prompt;
    req.config = config;
    req.validate();

    const TrajectoryCache cache(cache_dir.empty() ? default_cache_dir() : fs::path(cache_dir));
    std::optional<RunDirectory> run;
    if (!out_dir.empty())
        run = RunDirectory::create(out_dir, force);
    bool hit = false;
    const InversionTrajectory traj = cache.obtain(req, *backend, &hit);
    const std::string key = trajectory_cache_key(req.x_init, src_prompt, config.T, manifest);
    print_result(out, "cache_key", key);
    print_result(out, "cache_hit", hit ? "true" : "false");
    print_result(out, "trajectory", cache.entry_dir(key).string());
    if (run) {
        run->write_trajectory(traj, config.T);
        print_result(out, "run_dir", run->root().string());
    }
    return kExitOk;
}

struct EvalFlags {
    std::string manifest, out, lpips_weights, weights_dir;
    std::string embedder = "auto";
    std::vector<std::string> results;
    std::vector<std::size_t> crop_sizes = eval::kDefaultCropSizes;
    std::size_t stride = 0;
    std::size_t threads = 1;
    bool force = false;
};

int cmd_evaluate(const EvalFlags& f, std::ostream& out) {
    const eval::DatasetManifest manifest = eval::load_manifest(f.manifest);
    std::vector<eval::MethodResults> methods;
    for (const auto& spec : f.results)
        methods.push_back(eval::parse_method_results(spec));
    if (fs::exists(f.out) && !fs::is_empty(f.out) && !f.force)
        throw ValidationError("out", f.out + " is not empty; pass --force to overwrite");

    std::optional<fs::path> weights =
        f.lpips_weights.empty() ? eval::Lpips::default_weights_path() : std::optional<fs::path>(f.lpips_weights);
    if (!weights)
        throw Exit{kExitBackend, "no perceptual weights: pass --lpips-weights or set MATFUSE_LPIPS_WEIGHTS"};
    std::optional<eval::Lpips> lpips;
    try {
        lpips = eval::Lpips::load(*weights);
    } catch (const Error& e) {
        throw Exit{kExitBackend, std::string("perceptual metric load failed: ") + e.what()};
    }
    std::unique_ptr<eval::ImageEmbedder> embedder;
    try {
        embedder = eval::make_embedder(f.embedder, f.weights_dir.empty() ? std::nullopt
                                                                        : std::optional<fs::path>(f.weights_dir));
    } catch (const BackendError& e) {
        throw Exit{kExitBackend, std::string("embedder load failed: ") + e.what()};
    }

    eval::EvalOptions opts;
    opts.crop_sizes = f.crop_sizes;
    opts.stride = f.stride;
    opts.threads = f.threads;
    const eval::EvalReport report = eval::evaluate_dataset(manifest, methods, *lpips, *embedder, opts);
    fs::create_directories(f.out);
    eval::write_report(report, f.out);

    for (const auto& s : report.summaries)
        print_result(out, "method",
                     fmt::format("{} entries={} clip={:.6f} lpips={:.6f}",
                                 eval::MethodResults{s.method, s.lambda, {}}.label(), s.entries, s.clip_score,
                                 s.lpips));
    print_result(out, "zone",
                 fmt::format("favorable_points={} of {} favorable_records={} of {} (clip > {} and lpips < {})",
                             report.favorable_points(), report.summaries.size(), report.favorable_records(),
                             report.records.size(), report.zones.clip_low, report.zones.lpips));
    print_result(out, "skipped", std::to_string(report.skipped.size()));
    print_result(out, "embedder", report.embedder);
    print_result(out, "report", f.out);
    return kExitOk;
}

struct ServeFlags {
    std::string data_dir = "matfuse-data";
    std::string host = "127.0.0.1";
    int port = 8080;
    std::size_t workers = 0;
    int preview_every = 5;
    std::string cache_dir;
};

int cmd_serve(const BackendFlags& bf, const ServeFlags& f, std::ostream& out) {
    // Block the signals before any thread starts; one thread waits for them.
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    sigset_t old;
    pthread_sigmask(SIG_BLOCK, &set, &old);
    struct Restore {
        sigset_t old;
        ~Restore() { pthread_sigmask(SIG_SETMASK, &old, nullptr); }
    } restore{old};

    service::ServiceOptions opts;
    opts.data_dir = f.data_dir;
    opts.backend = bf.spec();
    opts.workers = f.workers;
    opts.preview_every = f.preview_every;
    if (!f.cache_dir.empty())
        opts.cache_dir = f.cache_dir;
    std::unique_ptr<service::Service> svc;
    try {
        svc = std::make_unique<service::Service>(opts);
    } catch (const BackendError& e) {
        throw Exit{kExitBackend, fmt::format("backend load failed ({}): {}", e.component(), e.what())};
    }

    httplib::Server server;
    svc->register_routes(server);
    const int port = f.port == 0 ? server.bind_to_any_port(f.host) : (server.bind_to_port(f.host, f.port) ? f.port : -1);
    if (port < 0)
        throw Exit{kExitRuntime, fmt::format("cannot listen on {}:{}", f.host, f.port)};
    print_result(out, "listening", fmt::format("http://{}:{}", f.host, port));
    out.flush();

    std::atomic<bool> done{false};
    std::thread waiter([&] {
        int sig = 0;
        sigwait(&set, &sig);
        if (!done)
            spdlog::info("signal {} received, stopping", sig);
        server.stop();
    });
    const bool ok = server.listen_after_bind();
    done = true;
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
    svc->shutdown();
    return ok ? kExitOk : kExitRuntime;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"matfuse: exemplar-based material transfer with guided diffusion"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "show help for every command");

    BackendFlags backend;
    ConfigFlags config;
    InputFlags inputs;
    RunFlags runf;

    auto* transfer = app.add_subcommand("transfer", "run one material transfer into a run directory");
    backend.add(*transfer);
    config.add(*transfer);
    inputs.add(*transfer);
    runf.add(*transfer);

    ConfigFlags sweep_config;
    InputFlags sweep_inputs;
    RunFlags sweep_run;
    std::string lambdas;
    int parallel = 1;
    auto* sweep = app.add_subcommand("sweep", "one transfer per lambda from a single inversion");
    backend.add(*sweep);
    sweep_config.add(*sweep, false);
    sweep_inputs.add(*sweep);
    sweep_run.add(*sweep);
    sweep->add_option("--lambdas", lambdas, "comma-separated lambda values, e.g. 0.5,0.8,1.1,1.5")->required();
    sweep->add_option("--parallel", parallel, "independent backend instances")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();

    int inv_steps = TransferConfig{}.T;
    std::string inv_image, inv_prompt, inv_out, inv_cache;
    bool inv_force = false;
    auto* invert = app.add_subcommand("invert", "invert an image and store the trajectory in the cache");
    backend.add(*invert);
    invert->add_option("--steps", inv_steps, "DDIM steps")->capture_default_str();
    invert->add_option("--image", inv_image, "object image")->required()->check(CLI::ExistingFile);
    invert->add_option("--src-prompt", inv_prompt, "prompt describing the image")->required();
    invert->add_option("--out", inv_out, "also copy the trajectory into this directory");
    invert->add_flag("--force", inv_force, "overwrite a non-empty --out directory");
    invert->add_option("--cache-dir", inv_cache, "inversion cache root (default: $MATFUSE_CACHE_DIR)");

    EvalFlags evalf;
    auto* evaluate = app.add_subcommand("evaluate", "score result images against a dataset manifest");
    evaluate->add_option("--manifest", evalf.manifest, "JSONL dataset manifest")->required()->check(CLI::ExistingFile);
    evaluate->add_option("--results", evalf.results, "method[@lambda]=dir, repeatable")->required();
    evaluate->add_option("--out", evalf.out, "report directory")->required();
    evaluate->add_option("--lpips-weights", evalf.lpips_weights,
                         "perceptual weights (default: $MATFUSE_LPIPS_WEIGHTS or $MATFUSE_WEIGHTS_DIR)");
    evaluate->add_option("--embedder", evalf.embedder,
                         "crop embedder: auto (CLIP when the image encoder is present), clip, texture-stats")
        ->check(CLI::IsMember({"auto", "clip", "texture-stats"}))
        ->capture_default_str();
    evaluate->add_option("--weights-dir", evalf.weights_dir, "weights root for the CLIP encoder (default: $MATFUSE_WEIGHTS_DIR)");
    evaluate->add_option("--crop-sizes", evalf.crop_sizes, "crop sizes in pixels")->capture_default_str();
    evaluate->add_option("--stride", evalf.stride, "crop stride, 0 = half the crop size")->capture_default_str();
    evaluate->add_option("--threads", evalf.threads, "worker threads")->check(CLI::PositiveNumber);
    evaluate->add_flag("--force", evalf.force, "overwrite a non-empty report directory");

    ServeFlags servef;
    auto* serve = app.add_subcommand("serve", "run the HTTP job service");
    backend.add(*serve);
    serve->add_option("--data-dir", servef.data_dir, "job store, uploads and run directories")->capture_default_str();
    serve->add_option("--host", servef.host, "bind address")->capture_default_str();
    serve->add_option("--port", servef.port, "port, 0 picks a free one")->capture_default_str();
    serve->add_option("--workers", servef.workers, "concurrent jobs, 0 = backend default");
    serve->add_option("--preview-every", servef.preview_every, "preview cadence in steps")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    serve->add_option("--cache-dir", servef.cache_dir, "inversion cache root (default: <data-dir>/cache)");

    std::vector<std::string> argv_store{"matfuse"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : argv_store)
        argv.push_back(a.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n";
        const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
        err << sub->help();
        return kExitUsage;
    }

    try {
        if (transfer->parsed())
            return cmd_transfer(backend, config, inputs, runf, out);
        if (sweep->parsed())
            return cmd_sweep(backend, sweep_config, sweep_inputs, sweep_run, lambdas, parallel, out);
        if (invert->parsed())
            return cmd_invert(backend, inv_steps, inv_image, inv_prompt, inv_out, inv_force, inv_cache, out);
        if (evaluate->parsed())
            return cmd_evaluate(evalf, out);
        if (serve->parsed())
            return cmd_serve(backend, servef, out);
    } catch (const Exit& e) {
        err << "error: " << e.message << '\n';
        return e.code;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const BackendError& e) {
        err << "error: backend " << e.component() << ": " << e.what() << '\n';
        return kExitRuntime;
    } catch (const CancelledError& e) {
        err << "error: interrupted, " << e.what() << '\n';
        return kExitRuntime;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return kExitInternal;
    }
    return kExitUsage;
}

}  // namespace matfuse::cli
