// vimu: synthetic data, preprocessing, GAN and classifier training, reports.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "vimu/checkpoint.hpp"
#include "vimu/harness.hpp"

namespace fs = std::filesystem;
using namespace vimu;

namespace {

constexpr int kExitUsage = 1, kExitData = 2, kExitDivergence = 3;

struct Common {
    std::string config;
    std::vector<std::string> sets;
    std::string dataset, out, arms;
    long long seed = -1;
    int gan_epochs = -1, clf_epochs = -1;
    bool quiet = false;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("-c,--config", c.config, "experiment config (JSON)");
    app->add_option("--set", c.sets, "override a config key, e.g. --set gan.epochs=200");
    app->add_option("--dataset", c.dataset, "dataset directory");
    app->add_option("-o,--out", c.out, "output directory");
    app->add_option("--arms", c.arms, "comma-separated arms");
    app->add_option("--seed", c.seed, "experiment seed");
    app->add_option("--gan-epochs", c.gan_epochs, "GAN epochs");
    app->add_option("--clf-epochs", c.clf_epochs, "classifier epochs");
    app->add_flag("-q,--quiet", c.quiet, "no progress output");
}

// config file < VIMU_SEED < explicit flags
ExperimentConfig resolve(const Common& c) {
    ExperimentConfig cfg;
    if (!c.config.empty()) cfg = load_config(c.config);
    apply_env_seed(cfg);
    std::vector<std::string> sets;
    auto quote = [](const std::string& s) { return nlohmann::json(s).dump(); };
    if (!c.dataset.empty()) sets.push_back("dataset=" + quote(c.dataset));
    if (!c.out.empty()) sets.push_back("output_dir=" + quote(c.out));
    if (c.seed >= 0) sets.push_back("seed=" + std::to_string(c.seed));
    if (c.gan_epochs >= 0) sets.push_back("gan.epochs=" + std::to_string(c.gan_epochs));
    if (c.clf_epochs >= 0) sets.push_back("clf.epochs=" + std::to_string(c.clf_epochs));
    if (!c.arms.empty()) {
        nlohmann::json a = nlohmann::json::array();
        std::stringstream ss(c.arms);
        for (std::string item; std::getline(ss, item, ',');) a.push_back(item);
        sets.push_back("arms=" + a.dump());
    }
    sets.insert(sets.end(), c.sets.begin(), c.sets.end());
    if (cfg.dataset.empty() && c.dataset.empty()) throw ConfigError("no dataset given (--dataset or config)");
    if (cfg.dataset.empty()) cfg.dataset = c.dataset;  // lets validation pass before overrides
    apply_overrides(cfg, sets);
    return cfg;
}

Progress make_progress(bool quiet) {
    Progress p;
    if (!quiet) p.log = [](const std::string& s) { std::cerr << "[vimu] " << s << '\n'; };
    return p;
}

void write_text(const fs::path& p, const std::string& s) {
    write_file_bytes(p, std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

std::vector<std::optional<SignalWindow>> load_virtual(const PreparedData& data, const ExperimentConfig& cfg) {
    const fs::path out(cfg.output_dir);
    const TrainedGenerator gen = load_generator(out / "generator.ckpt", out / "generator.json");
    return synthesize_virtual(data, gen);
}

bool needs_virtual(const std::vector<Arm>& arms) {
    return std::find(arms.begin(), arms.end(), Arm::virtual_multimodal) != arms.end();
}

int cmd_synth(const SynthConfig& sc, const std::string& out) {
    const DatasetManifest m = synth_generate(sc, out);
    std::cout << "wrote " << m.files.size() << " trials to " << out << '\n';
    return 0;
}

int cmd_preprocess(const Common& c) {
    const ExperimentConfig cfg = resolve(c);
    const PreparedData d = prepare_data(cfg);
    nlohmann::json j;
    j["k"] = d.k;
    j["step"] = d.step;
    j["effective_rate_hz"] = d.effective_rate_hz;
    j["classes"] = d.classes;
    j["windows"] = d.windows.size();
    j["plan"] = {{"experiment", to_string(d.plan.experiment)},
                 {"gan_subjects", d.plan.gan_subjects},
                 {"recognition_subjects", d.plan.recognition_subjects},
                 {"gan_train_trials", d.plan.gan_train_trials},
                 {"clf_train_trials", d.plan.clf_train_trials},
                 {"clf_test_trials", d.plan.clf_test_trials}};
    std::ostringstream csv;
    csv << "window_id,subject,trial,label,origin_frame\n";
    for (std::size_t i = 0; i < d.windows.size(); ++i) {
        const auto& w = d.windows[i];
        csv << i << ',' << w.subject << ',' << w.trial << ',' << w.label << ',' << w.hgr_semg.origin_frame << '\n';
    }
    const fs::path out(cfg.output_dir);
    write_text(out / "preprocess.json", j.dump(2) + "\n");
    write_text(out / "windows.csv", csv.str());
    std::cout << d.windows.size() << " windows, k=" << d.k << ", step=" << d.step << '\n';
    return 0;
}

int cmd_train_gan(const Common& c) {
    const ExperimentConfig cfg = resolve(c);
    const PreparedData d = prepare_data(cfg);
    const Progress p = make_progress(c.quiet);
    GeneratorStage g = train_generator_stage(d, cfg, [&](const GanEpochStats& e) {
        if (p.log && (e.epoch + 1) % 50 == 0) {
            p.log("epoch " + std::to_string(e.epoch + 1) + " D=" + std::to_string(e.d_loss) + " G=" + std::to_string(e.g_loss) +
                  " D(real)=" + std::to_string(e.d_real) + " D(fake)=" + std::to_string(e.d_fake));
        }
    });
    const fs::path out(cfg.output_dir);
    save_checkpoint(out / "generator.ckpt", g.generator.params);
    save_checkpoint(out / "discriminator.ckpt", g.discriminator);
    GanTrainConfig gc = cfg.gan;
    write_text(out / "generator.json",
               generator_sidecar_json(g.generator, gc, config_fingerprint(cfg)));
    std::ostringstream h;
    h.precision(9);
    h << "epoch,d_loss,g_loss,d_real,d_fake,value\n";
    for (const auto& e : g.history)
        h << e.epoch << ',' << e.d_loss << ',' << e.g_loss << ',' << e.d_real << ',' << e.d_fake << ',' << e.value << '\n';
    write_text(out / "gan_history.csv", h.str());
    std::cout << "generator saved to " << (out / "generator.ckpt").string() << '\n';
    return 0;
}

int cmd_generate(const Common& c) {
    const ExperimentConfig cfg = resolve(c);
    const PreparedData d = prepare_data(cfg);
    const auto virt = load_virtual(d, cfg);
    std::ostringstream csv;
    csv.precision(9);
    csv << "window_id,subject,trial,label,frame";
    for (std::size_t ch = 0; ch < d.manifest.imu_channels; ++ch) csv << ",ch" << ch;
    csv << '\n';
    std::size_t n = 0;
    for (std::size_t i = 0; i < virt.size(); ++i) {
        if (!virt[i]) continue;
        ++n;
        const auto& w = *virt[i];
        for (std::size_t f = 0; f < w.k; ++f) {
            csv << i << ',' << d.windows[i].subject << ',' << d.windows[i].trial << ',' << d.windows[i].label << ',' << f;
            for (std::size_t ch = 0; ch < w.channels; ++ch) csv << ',' << w.at(f, ch);
            csv << '\n';
        }
    }
    write_text(fs::path(cfg.output_dir) / "virtual_imu.csv", csv.str());
    std::cout << "generated " << n << " virtual IMU windows\n";
    return 0;
}

int cmd_train_clf(const Common& c) {
    const ExperimentConfig cfg = resolve(c);
    const PreparedData d = prepare_data(cfg);
    const auto virt = needs_virtual(cfg.arms) ? load_virtual(d, cfg) : std::vector<std::optional<SignalWindow>>{};
    const Progress p = make_progress(c.quiet);
    const fs::path out(cfg.output_dir);
    for (Arm arm : cfg.arms) {
        const TrainedArm ta = train_arm(d, arm, cfg, virt, p);
        for (std::size_t i = 0; i < ta.subjects.size(); ++i)
            save_checkpoint(out / classifier_checkpoint_name(arm, ta.subjects[i]), ta.params[i]);
        std::cout << to_string(arm) << ": trained " << ta.subjects.size() << " subject models\n";
    }
    return 0;
}

int cmd_evaluate(const Common& c) {
    const ExperimentConfig cfg = resolve(c);
    const PreparedData d = prepare_data(cfg);
    const auto virt = needs_virtual(cfg.arms) ? load_virtual(d, cfg) : std::vector<std::optional<SignalWindow>>{};
    const fs::path out(cfg.output_dir);
    for (Arm arm : cfg.arms) {
        TrainedArm ta{arm, d.plan.recognition_subjects, {}};
        std::sort(ta.subjects.begin(), ta.subjects.end());
        for (int s : ta.subjects) ta.params.push_back(load_checkpoint(out / classifier_checkpoint_name(arm, s)));
        std::vector<Prediction> preds;
        const ArmResult r = evaluate_arm(d, ta, cfg, virt, &preds);
        std::ostringstream csv;
        csv.precision(9);
        csv << "window_id,subject,true_label,predicted_label,max_prob\n";
        for (std::size_t i = 0; i < ta.subjects.size(); ++i) {
            const ArmData ad = build_arm_data(d, arm, ta.subjects[i], virt);
            for (std::size_t w = 0; w < preds[i].classes.size(); ++w)
                csv << w << ',' << ta.subjects[i] << ',' << ad.test.labels[w] << ',' << preds[i].classes[w] << ','
                    << preds[i].max_prob[w] << '\n';
        }
        write_text(out / ("predictions_" + to_string(arm) + ".csv"), csv.str());
        std::printf("%s: mean accuracy %.4f (std %.4f)\n", to_string(arm).c_str(), r.mean, r.std);
    }
    return 0;
}

int cmd_run(const Common& c) {
    const ExperimentConfig cfg = resolve(c);
    const auto t0 = std::chrono::steady_clock::now();
    const MetricsReport r = run_experiment(cfg, true, make_progress(c.quiet));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (const auto& a : r.arms) std::printf("%-20s mean %.4f std %.4f\n", to_string(a.arm).c_str(), a.mean, a.std);
    for (const auto& [k, v] : r.deltas) std::printf("%-20s %+.4f\n", k.c_str(), v);
    std::printf("report written to %s (%.1f s)\n", cfg.output_dir.c_str(), secs);
    return 0;
}

int cmd_report(const std::string& report, const std::string& formats, const std::string& out) {
    const auto bytes = read_file_bytes(report);
    const MetricsReport r = report_from_json(std::string(bytes.begin(), bytes.end()));
    std::vector<std::string> f;
    std::stringstream ss(formats);
    for (std::string item; std::getline(ss, item, ',');) f.push_back(item);
    emit_report(r, f, out.empty() ? fs::path(report).parent_path() : fs::path(out));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"vimu: virtual IMU synthesis from sEMG and multimodal gesture recognition"};
    app.require_subcommand(1);

    SynthConfig sc;
    std::string synth_out, imu_kind = "euler";
    auto* synth = app.add_subcommand("synth", "write a seeded synthetic sEMG/IMU dataset");
    synth->add_option("-o,--out", synth_out, "dataset directory")->required();
    synth->add_option("--seed", sc.seed);
    synth->add_option("--subjects", sc.subjects);
    synth->add_option("--gestures", sc.gestures);
    synth->add_option("--trials", sc.trials);
    synth->add_option("--rate", sc.sample_rate_hz);
    synth->add_option("--semg-channels", sc.semg_channels);
    synth->add_option("--imu-channels", sc.imu_channels);
    synth->add_option("--imu-kind", imu_kind)->check(CLI::IsMember({"acc", "euler"}));
    synth->add_option("--trial-seconds", sc.trial_s);
    synth->add_option("--emg-noise", sc.emg_noise);
    synth->add_option("--imu-noise", sc.imu_noise);
    synth->add_option("--subject-gain-jitter", sc.subject_gain_jitter);
    synth->add_option("--trial-gain-jitter", sc.trial_gain_jitter);
    synth->add_option("--trial-amp-jitter", sc.trial_amp_jitter);
    synth->add_option("--orientation-jitter", sc.orientation_jitter);

    Common common;
    auto* pre = app.add_subcommand("preprocess", "window a dataset and write the split summary");
    auto* tgan = app.add_subcommand("train-gan", "train the sEMG-to-IMU generator");
    auto* gen = app.add_subcommand("generate-imu", "synthesize virtual IMU windows with a trained generator");
    auto* tclf = app.add_subcommand("train-clf", "train per-subject classifiers");
    auto* eval = app.add_subcommand("evaluate", "evaluate trained classifiers on test trials");
    auto* run = app.add_subcommand("run", "full pipeline: GAN, classifiers, report");
    for (auto* s : {pre, tgan, gen, tclf, eval, run}) add_common(s, common);

    std::string report_path, formats = "json,csv,svg", report_out;
    auto* rep = app.add_subcommand("report", "re-emit a report in other formats");
    rep->add_option("report", report_path, "report.json")->required();
    rep->add_option("--formats", formats);
    rep->add_option("-o,--out", report_out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    }

    try {
        if (synth->parsed()) {
            sc.imu_kind = modality_from_string(imu_kind);
            return cmd_synth(sc, synth_out);
        }
        if (pre->parsed()) return cmd_preprocess(common);
        if (tgan->parsed()) return cmd_train_gan(common);
        if (gen->parsed()) return cmd_generate(common);
        if (tclf->parsed()) return cmd_train_clf(common);
        if (eval->parsed()) return cmd_evaluate(common);
        if (run->parsed()) return cmd_run(common);
        if (rep->parsed()) return cmd_report(report_path, formats, report_out);
    } catch (const Error& e) {
        std::cerr << "vimu: " << e.what() << '\n';
        switch (e.category()) {
            case Error::Category::usage: return kExitUsage;
            case Error::Category::data: return kExitData;
            case Error::Category::divergence: return kExitDivergence;
        }
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "vimu: " << e.what() << '\n';
        return kExitData;
    }
    return kExitUsage;
}
