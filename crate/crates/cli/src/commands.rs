use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use colex_core::agents::{run_dyad_simulation, run_naming_grid, StrategyConfig, StrategyKind};
use colex_core::analysis::{
    analyze_dataset, load_dataset, write_cases_csv, write_cost_scatter_csv, write_entropy_csv,
    write_summaries_csv, AnalysisOptions, AnalysisReport,
};
use colex_core::engine::{DyadLog, Game, GameMeta};
use colex_core::lexicon::{generate_stimulus, Lexicon, StimulusBundle, WordList};
use colex_core::schedule::{build_schedule, pair_frequency_table, validate_schedule, TrialSchedule};
use colex_core::Condition;
use colex_server::{ExperimentConfig, Hub};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::{
    AnalyzeArgs, Cli, CliError, Command, LexiconArgs, ReplayArgs, ScheduleArgs, ServeArgs, SimulateArgs,
    StimgenArgs,
};

type Result<T> = std::result::Result<T, CliError>;

fn validation(e: impl ToString) -> CliError {
    CliError::Validation(e.to_string())
}

pub fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(p) => ExperimentConfig::load(p).map_err(|e| match e {
            colex_server::ServerError::Io(e) => CliError::Io(e.to_string()),
            other => validation(other),
        })?,
        None => ExperimentConfig::default(),
    };
    let seed = cli.seed.or(config.seed).unwrap_or_else(rand::random);
    eprintln!("seed: {seed}");
    let ctx = Ctx { config, seed };
    match cli.cmd {
        Command::Stimgen(a) => stimgen(&ctx, a),
        Command::Schedule(a) => schedule(&ctx, a),
        Command::Simulate(a) => simulate(&ctx, a),
        Command::Analyze(a) => analyze(a),
        Command::Serve(a) => serve(ctx, a),
        Command::Replay(a) => replay(a),
    }
}

struct Ctx {
    config: ExperimentConfig,
    seed: u64,
}

impl Ctx {
    fn condition(&self, flag: Option<Condition>) -> Condition {
        flag.unwrap_or(self.config.condition)
    }

    fn n_signals(&self, flag: Option<usize>, condition: Condition) -> usize {
        flag.or(self.config.n_signals).unwrap_or(condition.signal_count())
    }

    fn lexicon(&self, a: &LexiconArgs) -> Result<(Lexicon, WordList)> {
        let lex = match a.lexicon.as_ref().or(self.config.lexicon_path.as_ref()) {
            Some(p) => Lexicon::load(p).map_err(|e| validation(format!("{}: {e}", p.display())))?,
            None => Lexicon::bundled(),
        };
        let wl = match a.wordlist.as_ref().or(self.config.wordlist_path.as_ref()) {
            Some(p) => WordList::load(p).map_err(|e| validation(format!("{}: {e}", p.display())))?,
            None => WordList::bundled(),
        };
        Ok((lex, wl))
    }
}

/// Writes through a temporary file in the same directory, then renames.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().ok_or_else(|| CliError::Usage(format!("bad output path {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn load_stimulus(path: &Path) -> Result<StimulusBundle> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    StimulusBundle::from_json(&text).map_err(|e| validation(format!("{}: {e}", path.display())))
}

fn stimgen(ctx: &Ctx, a: StimgenArgs) -> Result<()> {
    let condition = ctx.condition(a.condition);
    let (lex, wl) = ctx.lexicon(&a.lexicon)?;
    let n = ctx.n_signals(a.n_signals, condition);
    let bundle = generate_stimulus(&lex, &wl, condition.required_variant(), n, ctx.seed).map_err(validation)?;
    write_atomic(&a.out, bundle.to_json().as_bytes())?;
    println!("wrote {} ({} meanings, {} signals)", a.out.display(), bundle.meaning_space.meanings().len(), n);
    Ok(())
}

fn schedule(ctx: &Ctx, a: ScheduleArgs) -> Result<()> {
    let stim = load_stimulus(&a.stimulus)?;
    let condition = ctx.condition(a.condition);
    let table = pair_frequency_table(&stim.meaning_space, condition).map_err(validation)?;
    let sched = build_schedule(&table, ctx.seed);
    let report = validate_schedule(&sched, &table);
    if !report.is_valid() {
        return Err(validation(format!("schedule failed validation: {report:?}")));
    }
    write_atomic(&a.out, sched.to_json().as_bytes())?;
    println!("wrote {} ({} trials, {condition})", a.out.display(), sched.len());
    Ok(())
}

fn write_dyad(dir: &Path, stim: &StimulusBundle, sched: &TrialSchedule, log: &DyadLog) -> Result<()> {
    write_atomic(&dir.join("stimulus.json"), stim.to_json().as_bytes())?;
    write_atomic(&dir.join("schedule.json"), sched.to_json().as_bytes())?;
    write_atomic(&dir.join("log.jsonl"), log.to_jsonl().as_bytes())
}

#[derive(Serialize)]
struct DyadicManifest {
    seed: u64,
    condition: Condition,
    strategy_a: StrategyKind,
    strategy_b: StrategyKind,
    dyads: Vec<DyadicCell>,
}

#[derive(Serialize)]
struct DyadicCell {
    dyad: String,
    stimulus_seed: u64,
    schedule_seed: u64,
    agent_seeds: [u64; 2],
    game_seed: u64,
}

fn simulate(ctx: &Ctx, a: SimulateArgs) -> Result<()> {
    let condition = ctx.condition(a.condition);
    let n = ctx.n_signals(a.n_signals, condition);
    let (lex, wl) = ctx.lexicon(&a.lexicon)?;
    let fixed = a.stimulus.as_deref().map(load_stimulus).transpose()?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let draw_stimulus = |s: u64| match &fixed {
        Some(b) => Ok(b.clone()),
        None => generate_stimulus(&lex, &wl, condition.required_variant(), n, s).map_err(validation),
    };

    if a.grid {
        let strategies = if a.strategies.is_empty() {
            StrategyKind::ALL.to_vec()
        } else {
            a.strategies.clone()
        };
        let stim = draw_stimulus(rng.next_u64())?;
        let table = pair_frequency_table(&stim.meaning_space, condition).map_err(validation)?;
        let run = run_naming_grid(&stim, condition, &strategies, a.repeats, rng.next_u64()).map_err(validation)?;
        for (cell, log) in run.manifest.cells.iter().zip(&run.logs) {
            let sched = build_schedule(&table, cell.schedule_seed);
            write_dyad(&a.out.join(&cell.dyad), &stim, &sched, log)?;
        }
        write_atomic(&a.out.join("stimulus.json"), stim.to_json().as_bytes())?;
        let manifest = serde_json::to_string_pretty(&run.manifest).expect("manifest serializes");
        write_atomic(&a.out.join("manifest.json"), manifest.as_bytes())?;
        println!("wrote {} grid runs to {}", run.logs.len(), a.out.display());
        return Ok(());
    }

    let strategy_b = a.strategy_b.unwrap_or(a.strategy_a);
    let mut manifest = DyadicManifest {
        seed: ctx.seed,
        condition,
        strategy_a: a.strategy_a,
        strategy_b,
        dyads: Vec::new(),
    };
    for i in 0..a.dyads {
        let cell = DyadicCell {
            dyad: format!("sim-{:04}", i + 1),
            stimulus_seed: rng.next_u64(),
            schedule_seed: rng.next_u64(),
            agent_seeds: [rng.next_u64(), rng.next_u64()],
            game_seed: rng.next_u64(),
        };
        let stim = draw_stimulus(cell.stimulus_seed)?;
        let table = pair_frequency_table(&stim.meaning_space, condition).map_err(validation)?;
        let sched = build_schedule(&table, cell.schedule_seed);
        let meta = GameMeta {
            dyad: cell.dyad.clone(),
            condition,
        };
        let k = stim.signal_set.len();
        let log = run_dyad_simulation(
            meta,
            &stim,
            &sched,
            StrategyConfig::new(a.strategy_a, k, cell.agent_seeds[0]),
            StrategyConfig::new(strategy_b, k, cell.agent_seeds[1]),
            cell.game_seed,
        )
        .map_err(validation)?;
        write_dyad(&a.out.join(&cell.dyad), &stim, &sched, &log)?;
        manifest.dyads.push(cell);
    }
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(&a.out.join("manifest.json"), text.as_bytes())?;
    println!("wrote {} games to {}", a.dyads, a.out.display());
    Ok(())
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> std::result::Result<(), colex_core::analysis::AnalysisError>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(buf)
}

fn summary_text(report: &AnalysisReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "dyad\tcondition\tstatus\tcorrect\taccuracy\tincluded\tentropy\tcases\tyes");
    for d in &report.summaries {
        let correct = d.correct.map_or("-".into(), |c| c.to_string());
        let acc = d.accuracy.map_or("-".into(), |a| format!("{a:.3}"));
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{:.3}\t{}\t{}",
            d.dyad, d.condition, d.status, correct, acc, d.included, d.entropy, d.n_cases, d.n_yes
        );
    }
    let included = report.summaries.iter().filter(|d| d.included).count();
    let _ = writeln!(s, "\n{} dyads, {} included, {} cases", report.summaries.len(), included, report.cases.len());
    match &report.fit {
        Ok(f) => {
            let names = ["intercept", "condition", "round", "condition:round"];
            let _ = writeln!(
                s,
                "fixed-effects fit ({} cases, {} iterations{}):",
                f.n_cases,
                f.iterations,
                if f.converged { "" } else { ", not converged" }
            );
            for i in 0..4 {
                let _ = writeln!(s, "  {:<16} {:>8.3}  (se {:.3})", names[i], f.coefficients[i], f.std_errors[i]);
            }
            if let Some(sep) = &f.separation {
                let _ = writeln!(s, "  separation: {sep}");
            }
        }
        Err(e) => {
            let _ = writeln!(s, "fixed-effects fit unavailable: {e}");
        }
    }
    s
}

fn analyze(a: AnalyzeArgs) -> Result<()> {
    let records = load_dataset(&a.data).map_err(|e| match e {
        colex_core::analysis::AnalysisError::Io(e) => CliError::Io(format!("{}: {e}", a.data.display())),
        other => validation(other),
    })?;
    let opts = AnalysisOptions {
        min_correct: a.min_correct,
        include_below_threshold: a.include_below_threshold,
    };
    let report = analyze_dataset(&records, &opts);
    let complete = report.complete();
    let out = &a.out;
    write_atomic(&out.join("cases.csv"), &csv_bytes(|w| write_cases_csv(&report.cases, w))?)?;
    write_atomic(&out.join("summaries.csv"), &csv_bytes(|w| write_summaries_csv(&report.summaries, w))?)?;
    write_atomic(&out.join("cost_scatter.csv"), &csv_bytes(|w| write_cost_scatter_csv(&complete, w))?)?;
    write_atomic(&out.join("entropy.csv"), &csv_bytes(|w| write_entropy_csv(&complete, w))?)?;
    let fit = match &report.fit {
        Ok(f) => serde_json::to_value(f).expect("fit serializes"),
        Err(e) => serde_json::json!({"error": e}),
    };
    write_atomic(&out.join("fit.json"), serde_json::to_string_pretty(&fit).expect("json").as_bytes())?;
    let text = summary_text(&report);
    write_atomic(&out.join("summary.txt"), text.as_bytes())?;
    print!("{text}");
    Ok(())
}

fn serve(ctx: Ctx, a: ServeArgs) -> Result<()> {
    let mut config = ctx.config.with_env().map_err(validation)?;
    if let Some(p) = a.port {
        config.port = p;
    }
    if let Some(d) = a.data_dir {
        config.data_dir = d;
    }
    config.seed = Some(ctx.seed);
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .try_init();
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let hub = Hub::open(config).map_err(|e| match e {
            colex_server::ServerError::Io(e) => CliError::Io(e.to_string()),
            other => validation(other),
        })?;
        let running = colex_server::spawn(hub).await.map_err(|e| CliError::Io(e.to_string()))?;
        eprintln!("listening on http://{}", running.addr);
        running.handle.await.map_err(|e| CliError::Io(e.to_string()))
    })
}

fn dyad_dirs(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.join("log.jsonl").is_file() {
            out.push(p.clone());
            continue;
        }
        let entries = fs::read_dir(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
        let mut found: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|d| d.join("log.jsonl").is_file())
            .collect();
        if found.is_empty() {
            return Err(CliError::Usage(format!("{}: no log.jsonl found", p.display())));
        }
        found.sort();
        out.extend(found);
    }
    Ok(out)
}

fn replay_one(dir: &Path) -> std::result::Result<String, String> {
    let stim = StimulusBundle::load(dir.join("stimulus.json")).map_err(|e| format!("stimulus.json: {e}"))?;
    let sched = TrialSchedule::load(dir.join("schedule.json")).map_err(|e| format!("schedule.json: {e}"))?;
    let log = DyadLog::load(dir.join("log.jsonl"))
        .map_err(|e| format!("log.jsonl: {e}"))?
        .map_err(|e| format!("log.jsonl: {e}"))?;
    let game = Game::replay(stim, sched, &log).map_err(|e| e.to_string())?;
    let status = if game.state.is_finished() {
        "complete"
    } else if game.state.is_abandoned() {
        "withdrawn"
    } else {
        "incomplete"
    };
    Ok(format!("{} rounds, {status}", game.state.history.len()))
}

fn replay(a: ReplayArgs) -> Result<()> {
    let dirs = dyad_dirs(&a.paths)?;
    let mut bad = 0;
    for d in &dirs {
        match replay_one(d) {
            Ok(msg) => println!("ok\t{}\t{msg}", d.display()),
            Err(msg) => {
                bad += 1;
                println!("violation\t{}\t{msg}", d.display());
            }
        }
    }
    if bad > 0 {
        return Err(validation(format!("{bad} of {} logs failed replay", dirs.len())));
    }
    Ok(())
}
