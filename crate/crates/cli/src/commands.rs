use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use kuramoto_oed::control::SearchConfig;
use kuramoto_oed::io::{read_json, read_text, write_json, write_text};
use kuramoto_oed::kuramoto::{Pair, SimConfig};
use kuramoto_oed::mocu::{
    conditional_mocu, estimate_mocu, rank_experiments, scores_to_csv, Backend, BackendKind,
    MocuConfig,
};
use kuramoto_oed::oed::{
    benchmark_speedup, sequence_agreement, summaries_to_csv, summarize_runs, CampaignState,
    GroundTruth, Planner, Selection,
};
use kuramoto_oed::parallel::derive_seed;
use kuramoto_oed::surrogate::{
    dataset_from_csv, dataset_to_csv, evaluate, generate_dataset, sidecar, train, DatasetSidecar,
    GenerationConfig, LabelingConfig, SurrogateClassifier, SystemSampler, TrainConfig,
};
use kuramoto_oed::uncertainty::{ExperimentOutcome, Setup, SetupFile};
use kuramoto_oed::{Error, Result};
use serde::Serialize;

use crate::{
    BackendArgs, BenchmarkArgs, CampaignArgs, Command, EmitPlotsArgs, EstimateArgs, GenDataArgs,
    MocuArgs, RankArgs, SimArgs, SourceArgs, TrainArgs,
};

const DATASET_CSV: &str = "dataset.csv";
const DATASET_META: &str = "dataset.json";
const MODEL: &str = "model.json";

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::GenData(a) => gen_data(&a),
        Command::Train(a) => train_cmd(&a),
        Command::Estimate(a) => estimate(&a),
        Command::Rank(a) => rank(&a),
        Command::Campaign(a) => campaign(&a),
        Command::Benchmark(a) => benchmark(&a),
        Command::EmitPlots(a) => emit_plots(&a),
    }
}

#[derive(Serialize)]
struct Manifest<'a, A: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    args: &'a A,
    outputs: Vec<&'a str>,
}

fn write_manifest<A: Serialize>(
    dir: &Path,
    command: &'static str,
    args: &A,
    outputs: &[&str],
) -> Result<()> {
    write_json(
        &dir.join("manifest.json"),
        &Manifest {
            tool: "kuramoto-oed",
            version: env!("CARGO_PKG_VERSION"),
            command,
            args,
            outputs: outputs.to_vec(),
        },
    )
}

fn load_setup(source: &SourceArgs) -> Result<SetupFile> {
    let file = match (&source.preset, &source.setup) {
        (Some(p), _) => SetupFile::from_preset(*p),
        (None, Some(path)) => read_json(path)?,
        (None, None) => {
            return Err(Error::InvalidConfig(
                "either --preset or --setup is required".into(),
            ))
        }
    };
    file.validate()?;
    Ok(file)
}

fn sim_config(sim: &SimArgs) -> Result<SimConfig> {
    let cfg = SimConfig {
        sample_rate_hz: sim.fs,
        duration_s: sim.duration,
        sync_window: (sim.duration / 2.0, sim.duration),
        ..SimConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn mocu_config(mocu: &MocuArgs, sim: &SimArgs) -> MocuConfig {
    let default_k = if mocu.paper_scale { 20_480 } else { 2048 };
    MocuConfig {
        search: SearchConfig {
            tolerance: sim.tolerance,
            ..SearchConfig::default()
        },
        common_random_numbers: mocu.crn,
        ..MocuConfig::with_k(mocu.k.unwrap_or(default_k))
    }
}

fn load_model(path: &Path) -> Result<SurrogateClassifier> {
    let model: SurrogateClassifier = read_json(path)?;
    model.validate()?;
    Ok(model)
}

fn backend(args: &BackendArgs, sim: &SimArgs) -> Result<Backend> {
    match args.backend {
        BackendKind::Ode => Ok(Backend::Ode(sim_config(sim)?)),
        BackendKind::Ml => {
            let path = args
                .model
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("the ml backend needs --model".into()))?;
            Ok(Backend::Ml(Arc::new(load_model(path)?)))
        }
    }
}

fn parse_pair(pair: &[usize]) -> Result<Pair> {
    match pair {
        [i, j] => Pair::one_based(*i, *j),
        _ => Err(Error::InvalidConfig(
            "a pair is two one-based indices, e.g. 1,2".into(),
        )),
    }
}

fn print_or_write(out: Option<&Path>, name: &str, text: &str) -> Result<()> {
    match out {
        Some(dir) => write_text(&dir.join(name), text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json_line<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

fn gen_data(args: &GenDataArgs) -> Result<()> {
    let setup = load_setup(&args.source)?;
    let sim = sim_config(&args.sim)?;
    let sampler = SystemSampler::from_class(&setup.class, &sim)?;
    let preset = args.source.preset;
    let per_class = args.per_class.unwrap_or(match (preset, args.paper_scale) {
        (Some(Setup::FiveOsc), true) => 20_000,
        (_, true) => 50_000,
        (Some(Setup::FiveOsc), false) => 2000,
        (_, false) => 5000,
    });
    let config = GenerationConfig {
        labeling: LabelingConfig {
            duration_s: args.label_duration,
            ..LabelingConfig::default()
        },
        ..GenerationConfig::new(per_class, args.seed)
    };
    let data = generate_dataset(&sampler, &config)?;
    write_text(&args.out.join(DATASET_CSV), &dataset_to_csv(&data))?;
    write_json(&args.out.join(DATASET_META), &sidecar(&data, &sampler))?;
    write_manifest(&args.out, "gen-data", args, &[DATASET_CSV, DATASET_META])?;
    eprintln!(
        "{} samples ({per_class} per label) from {} draws",
        data.samples.len(),
        data.attempts
    );
    Ok(())
}

fn train_cmd(args: &TrainArgs) -> Result<()> {
    let csv_path = args.data.join(DATASET_CSV);
    let meta: DatasetSidecar = read_json(&args.data.join(DATASET_META))?;
    let data = dataset_from_csv(
        &read_text(&csv_path)?,
        &meta,
        &csv_path.display().to_string(),
    )?;
    let multiplier = args
        .multiplier
        .or(args.preset.map(|p| p.hidden_multiplier()))
        .unwrap_or(if data.schema.n_total <= 6 { 3 } else { 4 });
    let config = TrainConfig {
        max_epochs: args.max_epochs,
        ..TrainConfig::for_schema(data.schema, multiplier, args.seed)
    };
    let (model, report) = train(&data, &config)?;
    let metrics = evaluate(&model, &data)?;
    if report.reached_cap {
        eprintln!(
            "warning: epoch cap reached at training accuracy {:.6}",
            report.final_accuracy
        );
    }
    write_json(&args.out.join(MODEL), &model)?;
    write_json(
        &args.out.join("train_report.json"),
        &serde_json::json!({ "report": report, "metrics": metrics }),
    )?;
    write_manifest(&args.out, "train", args, &[MODEL, "train_report.json"])?;
    eprintln!(
        "{} epochs, training accuracy {}",
        report.epochs, metrics.accuracy
    );
    Ok(())
}

fn estimate(args: &EstimateArgs) -> Result<()> {
    let setup = load_setup(&args.source)?;
    let backend = backend(&args.backend, &args.sim)?;
    let config = mocu_config(&args.mocu, &args.sim);
    let est = match (&args.pair, args.synchronized) {
        (Some(p), Some(synchronized)) => {
            let outcome = ExperimentOutcome {
                pair: parse_pair(p)?,
                synchronized,
            };
            conditional_mocu(&setup.class, &outcome, &backend, &config, args.mocu.seed)?
        }
        (Some(_), None) => {
            return Err(Error::InvalidConfig(
                "--pair needs --synchronized true|false".into(),
            ))
        }
        _ => estimate_mocu(&setup.class, &backend, &config, args.mocu.seed)?,
    };
    print_or_write(args.out.as_deref(), "estimate.json", &json_line(&est))?;
    if let Some(dir) = &args.out {
        write_manifest(dir, "estimate", args, &["estimate.json"])?;
    }
    Ok(())
}

fn rank(args: &RankArgs) -> Result<()> {
    let setup = load_setup(&args.source)?;
    let backend = backend(&args.backend, &args.sim)?;
    let config = mocu_config(&args.mocu, &args.sim);
    let ranking = rank_experiments(&setup.class, &backend, &config, args.mocu.seed)?;
    print_or_write(args.out.as_deref(), "ranking.csv", &scores_to_csv(&ranking))?;
    if let Some(dir) = &args.out {
        write_json(&dir.join("ranking.json"), &ranking)?;
        write_manifest(dir, "rank", args, &["ranking.csv", "ranking.json"])?;
    }
    Ok(())
}

fn campaign(args: &CampaignArgs) -> Result<()> {
    let setup = load_setup(&args.source)?;
    let class = &setup.class;
    let seed = args.mocu.seed;
    let truth = match (&args.true_model, args.sample_true_model, &setup.true_model) {
        (Some(path), _, _) => read_json::<Vec<f64>>(path)?,
        (None, false, Some(a)) => a.clone(),
        _ => class.sample_one(derive_seed(seed, 0x7255), 0),
    };
    let config = mocu_config(&args.mocu, &args.sim);
    let sim = sim_config(&args.sim)?;
    let eval = MocuConfig {
        k: args.eval_k.unwrap_or(config.k),
        common_random_numbers: false,
        ..config.clone()
    };
    let ground_truth = GroundTruth::new(sim, eval, derive_seed(seed, 0xE7A1));
    let selection = if args.strategy.uses_mocu() {
        Some(Selection::new(
            backend(&args.backend, &args.sim)?,
            config,
            seed,
        ))
    } else {
        None
    };
    let planner = Planner {
        strategy: args.strategy,
        selection: selection.as_ref(),
        ground_truth: &ground_truth,
        true_model: Some(&truth),
    };
    let state = planner.run_campaign(class, args.steps, seed)?;
    print_or_write(args.out.as_deref(), "log.jsonl", &state.to_jsonl())?;
    if let Some(dir) = &args.out {
        write_json(&dir.join("state.json"), &state)?;
        write_json(&dir.join("true_model.json"), &truth)?;
        write_manifest(
            dir,
            "campaign",
            args,
            &["log.jsonl", "state.json", "true_model.json"],
        )?;
    }
    Ok(())
}

fn benchmark(args: &BenchmarkArgs) -> Result<()> {
    let setup = load_setup(&args.source)?;
    let class = &setup.class;
    let pair = match &args.pair {
        Some(p) => parse_pair(p)?,
        None => class
            .pairs()
            .into_iter()
            .find(|p| class.is_informative(*p))
            .unwrap_or(class.pairs()[0]),
    };
    let ode = Backend::Ode(sim_config(&args.sim)?);
    let ml = Backend::Ml(Arc::new(load_model(&args.model)?));
    let seeds: Vec<u64> = (0..args.repeats.max(1) as u64)
        .map(|r| args.mocu.seed + r)
        .collect();
    let report = benchmark_speedup(
        class,
        pair,
        &ode,
        &ml,
        &mocu_config(&args.mocu, &args.sim),
        &seeds,
    )?;
    print_or_write(args.out.as_deref(), "benchmark.json", &json_line(&report))?;
    if let Some(dir) = &args.out {
        write_manifest(dir, "benchmark", args, &["benchmark.json"])?;
    }
    Ok(())
}

fn series_label(state: &CampaignState) -> String {
    match (state.strategy, state.backend) {
        (s, Some(b)) if s.uses_mocu() => format!("{s}_{b}"),
        (s, _) => s.to_string(),
    }
}

fn emit_plots(args: &EmitPlotsArgs) -> Result<()> {
    let mut by_series: BTreeMap<String, Vec<CampaignState>> = BTreeMap::new();
    for dir in &args.runs {
        let state: CampaignState = read_json(&dir.join("state.json"))?;
        by_series
            .entry(series_label(&state))
            .or_default()
            .push(state);
    }
    let mut rows = Vec::new();
    for (label, runs) in &by_series {
        rows.extend(summarize_runs(label, runs));
    }
    write_text(
        &args.out.join("mocu_trajectories.csv"),
        &summaries_to_csv(&rows),
    )?;

    // agreement between complete sequences of different series sharing a seed
    let mut agreement = String::from("series_a,series_b,seed,k,common\n");
    let complete: Vec<(&String, &CampaignState)> = by_series
        .iter()
        .flat_map(|(l, runs)| runs.iter().map(move |r| (l, r)))
        .filter(|(_, r)| r.is_exhausted())
        .collect();
    for (x, (la, a)) in complete.iter().enumerate() {
        for (lb, b) in &complete[x + 1..] {
            if la == lb || a.seed != b.seed {
                continue;
            }
            let counts = sequence_agreement(&a.sequence(), &b.sequence())?;
            for (k, c) in counts.iter().enumerate() {
                agreement.push_str(&format!("{la},{lb},{},{},{c}\n", a.seed, k + 1));
            }
        }
    }
    write_text(&args.out.join("sequence_agreement.csv"), &agreement)?;
    write_manifest(
        &args.out,
        "emit-plots",
        args,
        &["mocu_trajectories.csv", "sequence_agreement.csv"],
    )?;
    Ok(())
}
