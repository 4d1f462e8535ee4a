//! Subcommand implementations.

use std::io::{BufRead, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde_json::json;

use labmate_core::decision::{
    interpret_reply, step_fsm, Action, DecisionEvent, Policy, ReplyIntent, RobotState,
};
use labmate_core::eval::{
    delta_table, load_dataset, run_eval, AccuracyCell, EvalOptions, EvalReport,
};
use labmate_core::perception::{
    distance_matrix, ingest_scene, read_dataset, scene_to_record, IngestOptions, Scene,
};
use labmate_core::reasoning::{build_prompt, query_backend, PromptVariant};
use labmate_core::rules::{classify_scene, to_class};
use labmate_core::sim::{compare_policies, generate_dataset, run_episode, ScenarioSpec};

use crate::config::GlobalConfig;
use crate::{Cli, Command, PolicyArg};

pub fn run(cli: Cli) -> Result<()> {
    let cfg = GlobalConfig::load(cli.config.as_deref())?;
    let opts = IngestOptions { strict: cli.strict };
    match cli.command {
        Command::Gen {
            scenario,
            count,
            seed,
            out,
            class_mix,
            pos_sigma,
            depth_sigma,
            dropout,
        } => {
            let mut spec = cfg.sim.clone();
            spec.scenario = scenario.into();
            spec.count = count;
            if let Some(s) = seed {
                spec.seed = s;
            }
            if let Some(m) = class_mix {
                spec.class_mix = m;
            }
            if let Some(v) = pos_sigma {
                spec.noise.pos_sigma_m = v;
            }
            if let Some(v) = depth_sigma {
                spec.noise.depth_sigma_m = v;
            }
            if let Some(v) = dropout {
                spec.noise.dropout_p = v;
            }
            cmd_gen(&spec, &cfg, &out, cli.json)
        }
        Command::Label { input, output } => cmd_label(&cfg, &opts, &input, &output, cli.json),
        Command::Decide { scene, variant, interactive, backend } => {
            let mut bcfg = cfg.backend.clone();
            backend.apply(&mut bcfg);
            let variants = variant.to_variants();
            cmd_decide(&cfg, &opts, &scene, variants[variants.len() - 1], interactive, &bcfg, cli.json)
        }
        Command::Episode {
            scenario,
            spec: spec_path,
            seed,
            episodes,
            policy,
            occupancy,
            class_mix,
            replies,
            out,
            jobs,
            backend,
        } => {
            let mut spec = cfg.sim.clone();
            let mut ep_from_file: Option<labmate_core::sim::EpisodeConfig> = None;
            if let Some(path) = &spec_path {
                let file = read_episode_spec(path)?;
                if let Some(s) = file.scenario {
                    spec = s;
                }
                ep_from_file = file.episode;
            }
            if let Some(s) = scenario {
                spec.scenario = s.into();
            } else if spec_path.is_none() {
                bail!("episode needs --scenario or a --spec file naming one");
            }
            if let Some(s) = seed {
                spec.seed = s;
            }
            if let Some(o) = occupancy {
                spec.occupancy_s = o;
            }
            if let Some(m) = class_mix {
                spec.class_mix = m;
            }
            let mut ep = ep_from_file.unwrap_or_else(|| cfg.episode.clone());
            if let Some(r) = replies {
                ep.replies = serde_json::from_str(&r)
                    .context("--replies must be a JSON array of strings")?;
            }
            let mut bcfg = cfg.backend.clone();
            backend.apply(&mut bcfg);
            cmd_episode(&spec, &ep, &bcfg, policy, episodes, jobs, out.as_deref(), cli.json)
        }
        Command::Eval { dataset, variant, folds, seed, report, jobs, backend } => {
            let mut bcfg = cfg.backend.clone();
            backend.apply(&mut bcfg);
            cmd_eval(
                &cfg,
                &opts,
                &dataset,
                &bcfg,
                &variant.to_variants(),
                folds,
                seed,
                jobs,
                report.as_deref(),
                cli.json,
            )
        }
        Command::Report { input, cells } => cmd_report(input.as_deref(), cells.as_deref(), cli.json),
    }
}

#[derive(Debug, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct EpisodeSpecFile {
    scenario: Option<ScenarioSpec>,
    episode: Option<labmate_core::sim::EpisodeConfig>,
}

fn read_episode_spec(path: &Path) -> Result<EpisodeSpecFile> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading episode spec {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing episode spec {}", path.display()))
}

fn open_out(path: &Path) -> Result<Box<dyn Write>> {
    if path == Path::new("-") {
        Ok(Box::new(std::io::stdout().lock()))
    } else {
        let file = std::fs::File::create(path)
            .with_context(|| format!("creating {}", path.display()))?;
        Ok(Box::new(std::io::BufWriter::new(file)))
    }
}

fn cmd_gen(spec: &ScenarioSpec, cfg: &GlobalConfig, out: &Path, json: bool) -> Result<()> {
    let mut sink = open_out(out)?;
    let written = generate_dataset(spec, &cfg.rules, &mut sink)?;
    sink.flush()?;
    if json {
        println!(
            "{}",
            json!({"written": written, "scenario": spec.scenario, "seed": spec.seed,
                   "out": out.display().to_string()})
        );
    } else {
        eprintln!("wrote {written} records to {}", out.display());
    }
    Ok(())
}

fn cmd_label(
    cfg: &GlobalConfig,
    opts: &IngestOptions,
    input: &Path,
    output: &Path,
    json: bool,
) -> Result<()> {
    let file = std::fs::File::open(input).with_context(|| format!("opening {}", input.display()))?;
    let scenes = read_dataset(std::io::BufReader::new(file), opts)?;
    let mut sink = open_out(output)?;
    let mut counts = std::collections::BTreeMap::new();
    for mut scene in scenes {
        let judgment = classify_scene(&scene, &cfg.rules)?;
        scene.truth = Some(labmate_core::perception::TruthLabels {
            obstruction: judgment.obstruction,
            interaction: judgment.interaction,
        });
        let class = to_class(&judgment)?;
        *counts.entry(class.as_str()).or_insert(0usize) += 1;
        serde_json::to_writer(&mut sink, &scene_to_record(&scene))?;
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    if json {
        println!("{}", json!({"labeled": counts.values().sum::<usize>(), "classes": counts}));
    } else {
        eprintln!("labeled {} records: {:?}", counts.values().sum::<usize>(), counts);
    }
    Ok(())
}

fn read_scene_file(path: &Path, opts: &IngestOptions) -> Result<Scene> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading scene file {}", path.display()))?;
    Ok(ingest_scene(&text, opts)?)
}

fn describe_actions(actions: &[Action]) -> Vec<String> {
    actions
        .iter()
        .map(|a| match a {
            Action::EmitMessage(m) => format!("say: {m}"),
            Action::ProceedAtReducedSpeed => "proceed at reduced speed".to_string(),
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn cmd_decide(
    cfg: &GlobalConfig,
    opts: &IngestOptions,
    scene_path: &Path,
    variant: PromptVariant,
    interactive: bool,
    bcfg: &labmate_core::reasoning::BackendConfig,
    json: bool,
) -> Result<()> {
    let scene = read_scene_file(scene_path, opts)?;
    let report = distance_matrix(&scene);
    let bundle = build_prompt(&scene, &report, variant, &cfg.rules)?;
    let response = query_backend(&bundle, &scene, bcfg, &cfg.rules)?;
    let judgment = response.to_judgment(bcfg.kind.judgment_source());

    let mut dialogue: Vec<(String, String)> = Vec::new();
    let (mut state, actions) =
        step_fsm(RobotState::Navigating, &DecisionEvent::Judgment(judgment.clone()), Policy::Proactive)?;
    for action in &actions {
        if let Action::EmitMessage(m) = action {
            dialogue.push(("robot".to_string(), m.clone()));
        }
    }

    if interactive && state == RobotState::Querying {
        let stdin = std::io::stdin();
        let mut reask_used = false;
        loop {
            // the robot's line goes to stdout so a piped UI can display it
            println!("{}", dialogue.last().map(|(_, m)| m.as_str()).unwrap_or(""));
            let mut reply = String::new();
            if stdin.lock().read_line(&mut reply)? == 0 {
                // EOF: nobody answered
                let (next, _) = step_fsm(state, &DecisionEvent::Timeout, Policy::Proactive)?;
                state = next;
                break;
            }
            let reply = reply.trim().to_string();
            dialogue.push(("human".to_string(), reply.clone()));
            if interpret_reply(&reply) == ReplyIntent::Unclear && reask_used {
                let (next, _) = step_fsm(state, &DecisionEvent::Timeout, Policy::Proactive)?;
                state = next;
                break;
            }
            let (next, acts) =
                step_fsm(state, &DecisionEvent::HumanReply(reply), Policy::Proactive)?;
            state = next;
            for action in &acts {
                if let Action::EmitMessage(m) = action {
                    dialogue.push(("robot".to_string(), m.clone()));
                    reask_used = true;
                }
            }
            if state != RobotState::Querying {
                break;
            }
        }
    }

    if json {
        println!(
            "{}",
            json!({
                "scene_id": scene.scene_id,
                "obstruction": judgment.obstruction,
                "interaction": judgment.interaction,
                "consistent": judgment.consistent,
                "message": judgment.message,
                "source": judgment.source,
                "variant": variant,
                "prompt": bundle.text,
                "state": state,
                "actions": describe_actions(&actions),
                "dialogue": dialogue,
                "warnings": scene.warnings,
            })
        );
    } else {
        println!("scene     : {}", scene.scene_id);
        println!("obstruction: {}", judgment.obstruction);
        println!("interaction: {}", judgment.interaction);
        if !judgment.consistent {
            println!("note      : prediction is inconsistent (interaction without obstruction)");
        }
        if !interactive {
            if !judgment.message.is_empty() {
                println!("message   : {}", judgment.message);
            }
        } else {
            for (speaker, line) in &dialogue {
                println!("{speaker:>6}> {line}");
            }
        }
        println!("state     : {state}");
        for w in &scene.warnings {
            eprintln!("warning: {w}");
        }
    }
    Ok(())
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .context("building worker pool")?;
            Ok(pool.install(f))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_episode(
    spec: &ScenarioSpec,
    ep: &labmate_core::sim::EpisodeConfig,
    bcfg: &labmate_core::reasoning::BackendConfig,
    policy: PolicyArg,
    episodes: usize,
    jobs: Option<usize>,
    out: Option<&Path>,
    json: bool,
) -> Result<()> {
    let payload = match policy {
        PolicyArg::Both => {
            let summary =
                with_jobs(jobs, || compare_policies(spec, ep, bcfg, episodes))??;
            if !json && out.is_none() {
                println!("episodes              : {}", summary.episodes);
                println!("mean idle (proactive) : {:>8.2} s", summary.mean_idle_proactive_s);
                println!("mean idle (passive)   : {:>8.2} s", summary.mean_idle_passive_s);
                println!("mean reallocated      : {:>8.2} s", summary.mean_reallocated_proactive_s);
                println!(
                    "mean saved            : {:>8.2} s (sd {:.2}, min {:.0}, max {:.0})",
                    summary.mean_saved_s,
                    summary.saved_sd_s,
                    summary.min_saved_s,
                    summary.max_saved_s
                );
                return Ok(());
            }
            serde_json::to_value(&summary)?
        }
        PolicyArg::Proactive | PolicyArg::Passive => {
            let pol = if matches!(policy, PolicyArg::Proactive) {
                Policy::Proactive
            } else {
                Policy::Passive
            };
            let mut run_spec = spec.clone();
            run_spec.count = episodes;
            if episodes == 1 {
                let trace = run_episode(&run_spec, ep, pol, bcfg, 0)?;
                serde_json::to_value(&trace)?
            } else {
                let traces: Result<Vec<_>, _> = with_jobs(jobs, || {
                    use rayon::prelude::*;
                    (0..episodes)
                        .into_par_iter()
                        .map(|i| run_episode(&run_spec, ep, pol, bcfg, i))
                        .collect::<Result<Vec<_>, _>>()
                })?;
                let traces = traces?;
                let n = traces.len() as f64;
                json!({
                    "policy": pol,
                    "episodes": episodes,
                    "mean_idle_s": traces.iter().map(|t| t.idle_s as f64).sum::<f64>() / n,
                    "mean_reallocated_s":
                        traces.iter().map(|t| t.reallocated_s as f64).sum::<f64>() / n,
                    "mean_duration_s":
                        traces.iter().map(|t| t.duration_s as f64).sum::<f64>() / n,
                })
            }
        }
    };

    let text = serde_json::to_string_pretty(&payload)?;
    match out {
        Some(path) => {
            std::fs::write(path, text.as_bytes())
                .with_context(|| format!("writing {}", path.display()))?;
            if !json {
                eprintln!("wrote {}", path.display());
            } else {
                println!("{}", json!({"out": path.display().to_string()}));
            }
        }
        None => println!("{text}"),
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    cfg: &GlobalConfig,
    opts: &IngestOptions,
    dataset: &Path,
    bcfg: &labmate_core::reasoning::BackendConfig,
    variants: &[PromptVariant],
    folds: usize,
    seed: u64,
    jobs: Option<usize>,
    report_path: Option<&Path>,
    json: bool,
) -> Result<()> {
    let records = load_dataset(dataset, opts)?;
    if records.is_empty() {
        bail!("dataset {} contains no records", dataset.display());
    }
    let eval_opts = EvalOptions { folds, seed, jobs };
    let report = run_eval(&records, std::slice::from_ref(bcfg), variants, &cfg.rules, &eval_opts)?;

    let text = serde_json::to_string_pretty(&report)?;
    if let Some(path) = report_path {
        std::fs::write(path, text.as_bytes())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if json {
        println!("{text}");
    } else {
        print_report(&report);
        if let Some(path) = report_path {
            eprintln!("report written to {}", path.display());
        }
    }
    Ok(())
}

fn print_report(report: &EvalReport) {
    println!("folds: {}  seed: {}", report.folds, report.seed);
    println!(
        "{:<9} {:<22} {:<13} {:>9} {:>7} {:>7} {:>7}",
        "scenario", "backend", "variant", "accuracy", "spread", "fail%", "incons%"
    );
    for c in &report.cells {
        println!(
            "{:<9} {:<22} {:<13} {:>8}% {:>6}% {:>6.1} {:>7.1}",
            c.scenario.to_string(),
            c.backend,
            c.variant.to_string(),
            c.stats.mean_rounded,
            c.stats.sd_rounded,
            100.0 * c.parse_failure_rate,
            100.0 * c.inconsistent_prediction_rate,
        );
    }
    if !report.deltas.is_empty() {
        println!("deltas:");
        for d in &report.deltas {
            println!(
                "  {:<9} {:<14} {} - {} = {:+}",
                d.scenario.to_string(),
                d.kind,
                d.minuend,
                d.subtrahend,
                d.delta
            );
        }
    }
}

fn cmd_report(input: Option<&Path>, cells: Option<&Path>, json: bool) -> Result<()> {
    match (input, cells) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let report: EvalReport = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", path.display()))?;
            if report.schema_version != EvalReport::SCHEMA_VERSION {
                bail!(
                    "unsupported report schema_version {} (expected {})",
                    report.schema_version,
                    EvalReport::SCHEMA_VERSION
                );
            }
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print_report(&report);
            }
            Ok(())
        }
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let cells: Vec<AccuracyCell> = match serde_json::from_str::<serde_json::Value>(&text)? {
                serde_json::Value::Array(_) => serde_json::from_str(&text)?,
                v => serde_json::from_value(
                    v.get("cells")
                        .cloned()
                        .context("cell table needs a top-level array or a `cells` key")?,
                )?,
            };
            let deltas = delta_table(&cells)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&deltas)?);
            } else {
                println!("fine-tune gain (vision): ");
                for (s, d) in &deltas.fine_tune_gain {
                    println!("  {s}: {d:+}");
                }
                println!("depth effect (fine-tuned): ");
                for (s, d) in &deltas.depth_effect {
                    println!("  {s}: {d:+}");
                }
            }
            Ok(())
        }
        _ => bail!("report needs exactly one of --input or --cells"),
    }
}
