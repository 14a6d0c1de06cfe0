//! End-to-end experiments. Each one writes its reports, then re-reads them to
//! decide pass/fail, so the summary only reflects what is on disk.

use std::collections::HashSet;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use rankcode::generator::generate;
use rankcode::harness::{
    compression_stats, deviant_stream, half_split_corpus, log_prefixes, random_chunks, synth_corpus,
    walk_corpus, SynthConfig,
};
use rankcode::io::{compression_csv, detection_csv, parse_index_sequence, read_text, trace_csv, write_memory, CsvTable};
use rankcode::novelty::{entropy_profile, evaluate_detection, DetectionConfig};
use rankcode::rng::{derive_seed, seeded_rng};
use rankcode::{build_memory, pilot_reconstruction, window_sequence, GenerationConfig, RankMemory, WindowSpec};

use crate::{load_memory, write_file, Ctx};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ExperimentKind {
    Compress,
    Pilot,
    Generate,
    GlobalDeviant,
    Perturb,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub experiment: String,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub pass: bool,
}

fn check(name: &str, pass: bool, detail: String) -> Check {
    Check { name: name.to_string(), pass, detail }
}

fn memory_text(memory: &RankMemory) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_memory(&mut buf, memory)?;
    Ok(buf)
}

fn table(path: &Path) -> Result<CsvTable> {
    CsvTable::parse(&read_text(path)?).with_context(|| format!("reading {}", path.display()))
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?)
}

pub fn run_experiment(kind: ExperimentKind, dir: &Path, seed: u64, runs: Option<usize>, ctx: &Ctx) -> Result<Summary> {
    let name = kind.to_possible_value().unwrap().get_name().to_string();
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    match kind {
        ExperimentKind::Compress => run_compress(dir, seed).context("stage: compress")?,
        ExperimentKind::Pilot => run_pilot(dir, seed, runs.unwrap_or(100), ctx.jobs).context("stage: pilot")?,
        ExperimentKind::Generate => run_generate(dir, seed, runs.unwrap_or(100)).context("stage: generate")?,
        ExperimentKind::GlobalDeviant => {
            run_global_deviant(dir, seed, runs.unwrap_or(100)).context("stage: global-deviant")?
        }
        ExperimentKind::Perturb => run_perturb(dir, seed, runs.unwrap_or(2000), ctx.jobs).context("stage: perturb")?,
    }
    let checks = match kind {
        ExperimentKind::Compress => verify_compress(dir),
        ExperimentKind::Pilot => verify_pilot(dir),
        ExperimentKind::Generate => verify_generate(dir),
        ExperimentKind::GlobalDeviant => verify_global_deviant(dir),
        ExperimentKind::Perturb => verify_perturb(dir),
    }
    .context("stage: verify")?;
    let summary = Summary { experiment: name, seed, pass: checks.iter().all(|c| c.pass), checks };
    write_file(&dir.join("summary.json"), serde_json::to_vec_pretty(&summary)?)?;
    Ok(summary)
}

fn run_compress(dir: &Path, seed: u64) -> Result<()> {
    let seq = synth_corpus(&SynthConfig {
        motif_count: 50,
        motif_length: 20,
        alphabet_size: 64,
        repetitions: 2500,
        noise_rate: 0.05,
        seed,
    })?;
    let mut prefixes = log_prefixes(seq.len(), 16);
    prefixes.push(seq.len() * 4 / 5);
    let t = compression_stats(&seq, &[4, 6, 8], &prefixes, 1)?;
    write_file(&dir.join("compression.csv"), compression_csv(&t).to_text())
}

fn verify_compress(dir: &Path) -> Result<Vec<Check>> {
    let csv = table(&dir.join("compression.csv"))?;
    let frames: Vec<usize> = csv.column("frame_count")?;
    let ts: Vec<usize> = csv.column("chunk_length")?;
    let windows: Vec<usize> = csv.column("window_count")?;
    let index: Vec<usize> = csv.column("unique_index_chunk_count")?;
    let rank: Vec<usize> = csv.column("unique_rank_chunk_count")?;
    let mut ordered = true;
    let mut bounded = true;
    for i in 0..frames.len() {
        let fact: usize = (1..=ts[i]).product();
        ordered &= rank[i] <= index[i] && index[i] <= frames[i];
        bounded &= rank[i] <= windows[i].min(fact);
    }
    let six: Vec<usize> = (0..ts.len()).filter(|&i| ts[i] == 6).collect();
    let (Some(&end), Some(&late)) = (six.last(), six.iter().rev().nth(1)) else {
        bail!("no t = 6 rows");
    };
    let fifth = six
        .iter()
        .copied()
        .find(|&i| frames[i] * 5 >= frames[end] * 4)
        .unwrap_or(end);
    let rank_gain = rank[end] - rank[fifth];
    let plateau = rank[end] <= 720 && rank_gain * 100 <= rank[end];
    let growing = index[end] > index[late];
    Ok(vec![
        check("ordering", ordered, "rank <= index <= frames in every row".into()),
        check("rank bound", bounded, "rank <= min(windows, t!) in every row".into()),
        check(
            "t=6 rank plateau",
            plateau,
            format!("{} rank chunks at the end, {rank_gain} added over the last fifth", rank[end]),
        ),
        check(
            "t=6 index growth",
            growing,
            format!("{} -> {} index chunks over the last interval", index[late], index[end]),
        ),
    ])
}

fn run_pilot(dir: &Path, seed: u64, trials: usize, jobs: usize) -> Result<()> {
    let mut rng = seeded_rng(seed);
    let memory = build_memory(&random_chunks(1000, 6, 64, &mut rng))?;
    write_file(&dir.join("memory.txt"), memory_text(&memory)?)?;
    let run = |trial: usize| -> Result<(usize, rankcode::PilotResult)> {
        let mut r = seeded_rng(derive_seed(seed, trial as u64));
        let target = memory.entry(memory.first_entry(trial % memory.pattern_count())).clone();
        let hidden = r.gen_range(0..6);
        let mut mask = [true; 6];
        mask[hidden] = false;
        let config = GenerationConfig::new(6, 64, 6, r.gen());
        Ok((hidden, pilot_reconstruction(&target, &mask, &memory, &config)?))
    };
    let results: Vec<(usize, rankcode::PilotResult)> =
        pool(jobs)?.install(|| (0..trials).into_par_iter().map(run).collect::<Result<_>>())?;

    let mut trial_csv = CsvTable::new(&["trial", "unknown_position", "converged", "iterations_used", "final_error"]);
    let mut curves = CsvTable::new(&["trial", "iteration", "hamming_error"]);
    for (i, (hidden, r)) in results.iter().enumerate() {
        trial_csv.push([i.to_string(), hidden.to_string(), r.converged.to_string(), r.iterations_used.to_string(), r.final_error.to_string()]);
        for (k, e) in r.error_curve.iter().enumerate() {
            curves.push([i, k + 1, *e]);
        }
    }
    write_file(&dir.join("pilot_trials.csv"), trial_csv.to_text())?;
    write_file(&dir.join("pilot_curves.csv"), curves.to_text())
}

fn verify_pilot(dir: &Path) -> Result<Vec<Check>> {
    let memory = load_memory(&dir.join("memory.txt"))?;
    let csv = table(&dir.join("pilot_trials.csv"))?;
    let errors: Vec<usize> = csv.column("final_error")?;
    let iters: Vec<usize> = csv.column("iterations_used")?;
    let zero = errors.iter().filter(|&&e| e == 0).count();
    let slowest = iters.iter().max().copied().unwrap_or(0);
    Ok(vec![
        check(
            "pattern coverage",
            memory.pattern_count() >= 100,
            format!("{} rank patterns stored", memory.pattern_count()),
        ),
        check(
            "convergence",
            zero == errors.len() && slowest <= 1000,
            format!("{zero}/{} trials at zero error, slowest {slowest} iterations", errors.len()),
        ),
    ])
}

fn run_generate(dir: &Path, seed: u64, runs: usize) -> Result<()> {
    let wc = walk_corpus(36, 6, 64, 1000, seed)?;
    let memory = build_memory(&wc.corpus)?;
    write_file(&dir.join("memory.txt"), memory_text(&memory)?)?;
    write_file(&dir.join("walk.txt"), join(&wc.walk) + "\n")?;
    let mut csv = CsvTable::new(&["run", "converged", "max_step_iterations", "sequence"]);
    for run in 0..runs {
        let config = GenerationConfig::new(6, 64, wc.walk.len(), derive_seed(seed, run as u64));
        let out = generate(&wc.walk[..5], &memory, &config, Some(&wc.walk))?;
        if run == 0 {
            write_file(&dir.join("trace_run0.csv"), trace_csv(&out.trace).to_text())?;
        }
        let busiest = out.trace.steps.iter().map(|s| s.iterations_used).max().unwrap_or(0);
        let seq = out.sequence.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
        csv.push([run.to_string(), out.failed_step.is_none().to_string(), busiest.to_string(), seq]);
    }
    write_file(&dir.join("generation_runs.csv"), csv.to_text())
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn verify_generate(dir: &Path) -> Result<Vec<Check>> {
    let memory = load_memory(&dir.join("memory.txt"))?;
    let walk = parse_index_sequence(&read_text(dir.join("walk.txt"))?)?;
    let csv = table(&dir.join("generation_runs.csv"))?;
    let converged: Vec<bool> = csv.column("converged")?;
    let busiest: Vec<usize> = csv.column("max_step_iterations")?;
    let seqs: Vec<String> = csv.column("sequence")?;
    let stored: HashSet<&[usize]> = memory.repository().iter().map(|c| c.values()).collect();
    let t = memory.chunk_length();
    let mut exact = 0;
    let mut bad_windows = 0;
    for (i, s) in seqs.iter().enumerate() {
        let seq = parse_index_sequence(s)?;
        if converged[i] {
            bad_windows += seq.windows(t).filter(|w| !stored.contains(w)).count();
            exact += usize::from(seq == walk && busiest[i] <= 1000);
        }
    }
    let n = seqs.len();
    Ok(vec![
        check("exact reproduction", exact * 100 >= 95 * n, format!("{exact}/{n} runs reproduce the {}-index walk", walk.len())),
        check("grammaticality", bad_windows == 0, format!("{bad_windows} generated windows missing from the repository")),
    ])
}

fn run_global_deviant(dir: &Path, seed: u64, streams: usize) -> Result<()> {
    let mut csv = CsvTable::new(&["stream", "position", "entropy", "deviant", "patterns"]);
    for s in 0..streams {
        let mut rng = seeded_rng(derive_seed(seed, s as u64));
        let corpus = half_split_corpus(6, 64, 428, &mut rng)?;
        let memory = build_memory(&corpus)?;
        let stream = deviant_stream(&memory, 8, 4, 10_000, &mut rng)?;
        let profile = entropy_profile(&stream.chunks, &memory)?;
        for (i, h) in profile.values.iter().enumerate() {
            csv.push([s.to_string(), (i + 1).to_string(), h.to_string(), (i == stream.deviant).to_string(), memory.pattern_count().to_string()]);
        }
    }
    write_file(&dir.join("entropy.csv"), csv.to_text())
}

fn verify_global_deviant(dir: &Path) -> Result<Vec<Check>> {
    let csv = table(&dir.join("entropy.csv"))?;
    let stream: Vec<usize> = csv.column("stream")?;
    let position: Vec<usize> = csv.column("position")?;
    let entropy: Vec<f64> = csv.column("entropy")?;
    let patterns: Vec<usize> = csv.column("patterns")?;
    let ids: Vec<usize> = stream.iter().copied().collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let mut hits = 0;
    let mut min_margin = f64::INFINITY;
    for &s in &ids {
        let rows: Vec<usize> = (0..stream.len()).filter(|&i| stream[i] == s).collect();
        let peak = rows.iter().copied().fold(rows[0], |b, i| if entropy[i] > entropy[b] { i } else { b });
        let dev = rows.iter().copied().find(|&i| position[i] == 5).context("stream without chunk #5")?;
        let rest = rows.iter().filter(|&&i| i != dev).map(|&i| entropy[i]).fold(f64::MIN, f64::max);
        min_margin = min_margin.min(entropy[dev] - rest);
        hits += usize::from(position[peak] == 5 && entropy[dev] > rest);
    }
    let n = ids.len();
    let fewest = patterns.iter().min().copied().unwrap_or(0);
    Ok(vec![
        check("pattern coverage", fewest >= 50, format!("at least {fewest} rank patterns per corpus")),
        check(
            "entropy peak at #5",
            hits * 100 >= 95 * n,
            format!("{hits}/{n} streams peak at the deviant, smallest margin {min_margin:.4} nats"),
        ),
    ])
}

fn run_perturb(dir: &Path, seed: u64, trials: usize, jobs: usize) -> Result<()> {
    let seq = synth_corpus(&SynthConfig {
        motif_count: 30,
        motif_length: 20,
        alphabet_size: 64,
        repetitions: 500,
        noise_rate: 0.05,
        seed,
    })?;
    let memory = build_memory(&window_sequence(&seq, WindowSpec::new(6, 1)?)?)?;
    write_file(&dir.join("memory.txt"), memory_text(&memory)?)?;
    let config = DetectionConfig { swaps: (2..=6).collect(), trials, seed, jobs };
    let t = evaluate_detection(&memory, &config)?;
    write_file(&dir.join("detection.csv"), detection_csv(&t).to_text())
}

fn verify_perturb(dir: &Path) -> Result<Vec<Check>> {
    let csv = table(&dir.join("detection.csv"))?;
    let layout = ["n_swaps", "index_fp_pct", "index_fn_pct", "rank_fp_pct", "rank_fn_pct"];
    let has_layout = csv.header.len() >= 5 && csv.header[..5] == layout;
    let col = |name: &str| csv.column::<f64>(name);
    let (ifp, ifn, rfp, rfn) = (col("index_fp_pct")?, col("index_fn_pct")?, col("rank_fp_pct")?, col("rank_fn_pct")?);
    let max = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max);
    Ok(vec![
        check("table layout", has_layout, csv.header.join(",")),
        check(
            "rank level exact",
            rfp.iter().chain(&rfn).all(|&v| v == 0.0),
            format!("max rank FP {:.2}%, FN {:.2}%", max(&rfp), max(&rfn)),
        ),
        check(
            "index level within 1%",
            ifp.iter().chain(&ifn).all(|&v| v <= 1.0),
            format!("max index FP {:.2}%, FN {:.2}%", max(&ifp), max(&ifn)),
        ),
    ])
}
