mod config;
mod experiment;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use rankcode::generator::generate;
use rankcode::harness::{compression_stats, log_prefixes, synth_corpus, SynthConfig};
use rankcode::io::{
    compression_csv, detection_csv, parse_chunks, parse_codebook, parse_features, parse_index_sequence,
    parse_memory, read_text, trace_csv, write_codebook, write_index_sequence, write_memory, CsvTable,
};
use rankcode::novelty::{evaluate_detection, novelty_report, DetectionConfig, EntropyProfile};
use rankcode::quantizer::{encode, topology_score, train_som, SomConfig};
use rankcode::{
    filter_constant_chunks, pilot_reconstruction, window_sequence, GenerationConfig, RankMemory,
    WindowSpec,
};

use config::{parse_list, Config, Paths};
use experiment::ExperimentKind;

#[derive(Parser)]
#[command(name = "rankcode", version, about = "Rank-order coding of index sequences")]
struct Cli {
    /// key = value file with defaults; flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for independent trials
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Base directory for relative paths
    #[arg(long, global = true, env = "RANKCODE_DATA_DIR")]
    data_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a 1-D SOM codebook on a feature matrix
    TrainSom {
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        neurons: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Map feature frames to winner indices
    Encode {
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        codebook: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Window an index stream and store it as a rank memory
    BuildMemory {
        #[arg(long)]
        indices: Option<PathBuf>,
        #[arg(long)]
        chunk_length: Option<usize>,
        #[arg(long)]
        stride: Option<usize>,
        /// Keep chunks made of a single repeated index
        #[arg(long)]
        keep_constant: bool,
        /// Drop repeated chunks, keeping first occurrences
        #[arg(long)]
        dedup: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Continue a seed context autoregressively
    Generate {
        #[arg(long)]
        memory: Option<PathBuf>,
        /// Comma-separated context of t - stride indices
        #[arg(long)]
        seed_indices: Option<String>,
        #[arg(long)]
        length: Option<usize>,
        #[arg(long)]
        stride: Option<usize>,
        #[arg(long)]
        max_iters: Option<usize>,
        /// RNG seed
        #[arg(long)]
        rng: Option<u64>,
        /// Placeholder alphabet size; defaults to the largest stored index + 1
        #[arg(long)]
        neurons: Option<usize>,
        /// Expected sequence, used only for the error columns of the trace
        #[arg(long)]
        target: Option<String>,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reconstruct one chunk from partially known indices
    Pilot {
        #[arg(long)]
        memory: Option<PathBuf>,
        /// Comma-separated target chunk
        #[arg(long)]
        target: Option<String>,
        /// 0-based positions to hide
        #[arg(long)]
        unknown: Option<String>,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long)]
        rng: Option<u64>,
        #[arg(long)]
        neurons: Option<usize>,
        /// CSV of Hamming error per iteration
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// Entropy profile and violation flags for a chunk stream
    Novelty {
        #[arg(long)]
        memory: Option<PathBuf>,
        /// One comma-separated chunk per line
        #[arg(long)]
        stream: Option<PathBuf>,
        /// Entropy margin above the stream mean for flagging deviants
        #[arg(long)]
        margin: Option<f64>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// False positive / negative rates under random derangements
    Perturb {
        #[arg(long)]
        memory: Option<PathBuf>,
        /// One or more swap counts, e.g. 2,3,4,5,6
        #[arg(long)]
        swaps: Option<String>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Growth of distinct index and rank chunks over prefixes of a stream
    Compress {
        #[arg(long)]
        indices: Option<PathBuf>,
        #[arg(long)]
        chunk_lengths: Option<String>,
        /// Explicit prefix lengths; otherwise log-spaced points
        #[arg(long)]
        prefixes: Option<String>,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        stride: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic motif stream
    Synth {
        #[arg(long)]
        motifs: Option<usize>,
        #[arg(long)]
        motif_length: Option<usize>,
        #[arg(long)]
        alphabet: Option<usize>,
        #[arg(long)]
        repetitions: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment end to end; exits 0 only if all its checks pass
    Experiment {
        #[arg(value_enum)]
        kind: ExperimentKind,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Trials, runs or streams, depending on the experiment
        #[arg(long)]
        runs: Option<usize>,
    },
}

pub struct Ctx {
    pub config: Config,
    pub paths: Paths,
    pub jobs: usize,
}

impl Ctx {
    pub fn input(&self, flag: Option<PathBuf>, key: &str) -> Result<PathBuf> {
        Ok(self.paths.resolve(&self.config.need(flag, key)?))
    }

    pub fn output(&self, flag: Option<PathBuf>, key: &str) -> Result<Option<PathBuf>> {
        let p: Option<PathBuf> = match flag {
            Some(p) => Some(p),
            None => self.config.get(key)?,
        };
        Ok(p.map(|p| self.paths.resolve(&p)))
    }
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn emit(path: Option<PathBuf>, contents: Vec<u8>) -> Result<()> {
    match path {
        Some(p) => write_file(&p, contents),
        None => {
            print!("{}", String::from_utf8_lossy(&contents));
            Ok(())
        }
    }
}

pub fn load_memory(path: &Path) -> Result<RankMemory> {
    parse_memory(&read_text(path)?).with_context(|| format!("loading memory {}", path.display()))
}

fn alphabet_for(memory: &RankMemory, flag: Option<usize>, ctx: &Ctx, extra: &[usize]) -> Result<usize> {
    let stored = memory.max_index().map_or(1, |m| m + 1);
    let seen = extra.iter().max().map_or(0, |m| m + 1);
    ctx.config.pick(flag, "neurons", stored.max(seen))
}

fn run(cli: Cli) -> Result<bool> {
    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let jobs = config.pick(cli.jobs, "jobs", 1)?.max(1);
    let ctx = Ctx { paths: Paths { base: cli.data_dir.clone() }, config, jobs };
    let cfg = &ctx.config;

    match cli.command {
        Command::TrainSom { features, neurons, epochs, seed, out } => {
            let frames = parse_features(&read_text(ctx.input(features, "features")?)?)?;
            let som = SomConfig::new(cfg.pick(neurons, "neurons", 64)?, cfg.pick(epochs, "epochs", 10)?, cfg.pick(seed, "seed", 0)?);
            let codebook = train_som(&frames, &som)?;
            let mut buf = Vec::new();
            write_codebook(&mut buf, &codebook)?;
            emit(ctx.output(out, "out")?, buf)?;
            if codebook.neurons() >= 3 {
                eprintln!("topology score {:.4}", topology_score(&codebook)?);
            }
        }
        Command::Encode { features, codebook, out } => {
            let frames = parse_features(&read_text(ctx.input(features, "features")?)?)?;
            let codebook = parse_codebook(&read_text(ctx.input(codebook, "codebook")?)?)?;
            let ids = encode(&frames, &codebook)?;
            let mut buf = Vec::new();
            write_index_sequence(&mut buf, &ids)?;
            emit(ctx.output(out, "out")?, buf)?;
        }
        Command::BuildMemory { indices, chunk_length, stride, keep_constant, dedup, out } => {
            let seq = parse_index_sequence(&read_text(ctx.input(indices, "indices")?)?)?;
            let spec = WindowSpec::new(cfg.pick(chunk_length, "chunk-length", 6)?, cfg.pick(stride, "stride", 1)?)?;
            let mut chunks = window_sequence(&seq, spec)?;
            let windows = chunks.len();
            if !(keep_constant || cfg.pick(None, "keep-constant", false)?) {
                chunks = filter_constant_chunks(chunks);
            }
            if dedup || cfg.pick(None, "dedup", false)? {
                chunks = rankcode::chunk::dedup_chunks(chunks);
            }
            let memory = RankMemory::build(chunks)?;
            eprintln!("{windows} windows, {} stored, {} rank patterns", memory.len(), memory.pattern_count());
            let mut buf = Vec::new();
            write_memory(&mut buf, &memory)?;
            emit(ctx.output(out, "out")?, buf)?;
        }
        Command::Generate { memory, seed_indices, length, stride, max_iters, rng, neurons, target, trace, out } => {
            let memory = load_memory(&ctx.input(memory, "memory")?)?;
            let seed: Vec<usize> = parse_list(&cfg.need(seed_indices, "seed-indices")?)?;
            let target: Option<Vec<usize>> = match target.or(cfg.get("target")?) {
                Some(t) => Some(parse_list(&t)?),
                None => None,
            };
            let mut extra = seed.clone();
            extra.extend(target.iter().flatten());
            let mut gc = GenerationConfig::new(
                memory.chunk_length(),
                alphabet_for(&memory, neurons, &ctx, &extra)?,
                cfg.need(length, "length")?,
                cfg.pick(rng, "rng", 0)?,
            );
            gc.stride = cfg.pick(stride, "stride", 1)?;
            gc.max_iters = cfg.pick(max_iters, "max-iters", gc.max_iters)?;
            let outcome = generate(&seed, &memory, &gc, target.as_deref())?;
            if let Some(p) = ctx.output(trace, "trace")? {
                write_file(&p, trace_csv(&outcome.trace).to_text())?;
            }
            let line = outcome.sequence.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
            emit(ctx.output(out, "out")?, format!("{line}\n").into_bytes())?;
            if let Some(step) = outcome.failed_step {
                bail!("step {step} did not converge within {} iterations", gc.max_iters);
            }
            if let Some(t) = &target {
                let exact = t.as_slice() == outcome.sequence.as_slice();
                eprintln!("matches target: {exact}");
                return Ok(exact);
            }
        }
        Command::Pilot { memory, target, unknown, max_iters, rng, neurons, curve } => {
            let memory = load_memory(&ctx.input(memory, "memory")?)?;
            let target: Vec<usize> = parse_list(&cfg.need(target, "target")?)?;
            let hidden: Vec<usize> = parse_list(&cfg.pick(unknown, "unknown", String::new())?)?;
            let mut mask = vec![true; target.len()];
            for &k in &hidden {
                if k >= mask.len() {
                    bail!("unknown position {k} outside a chunk of {}", mask.len());
                }
                mask[k] = false;
            }
            let mut gc = GenerationConfig::new(
                memory.chunk_length(),
                alphabet_for(&memory, neurons, &ctx, &target)?,
                memory.chunk_length(),
                cfg.pick(rng, "rng", 0)?,
            );
            gc.max_iters = cfg.pick(max_iters, "max-iters", gc.max_iters)?;
            let r = pilot_reconstruction(&target, &mask, &memory, &gc)?;
            if let Some(p) = ctx.output(curve, "curve")? {
                let mut csv = CsvTable::new(&["iteration", "hamming_error"]);
                for (i, e) in r.error_curve.iter().enumerate() {
                    csv.push([i + 1, *e]);
                }
                write_file(&p, csv.to_text())?;
            }
            println!(
                "converged {} after {} iterations, final error {}",
                r.converged, r.iterations_used, r.final_error
            );
            return Ok(r.final_error == 0);
        }
        Command::Novelty { memory, stream, margin, report } => {
            let memory = load_memory(&ctx.input(memory, "memory")?)?;
            let chunks = parse_chunks(&read_text(ctx.input(stream, "stream")?)?)?;
            let rep = novelty_report(&chunks, &memory)?;
            let profile = EntropyProfile { values: rep.chunks.iter().map(|c| c.entropy).collect() };
            let margin = cfg.pick(margin, "margin", 0.0)?;
            let json = serde_json::json!({
                "chunks": rep.chunks,
                "entropy_peak": rep.entropy_peak.map(|p| p + 1),
                "margin": margin,
                "deviants": profile.deviants(margin).iter().map(|p| p + 1).collect::<Vec<_>>(),
            });
            emit(ctx.output(report, "report")?, serde_json::to_vec_pretty(&json)?)?;
            if let Some(p) = rep.entropy_peak {
                eprintln!("entropy peak at chunk #{}", p + 1);
            }
        }
        Command::Perturb { memory, swaps, trials, seed, table } => {
            let memory = load_memory(&ctx.input(memory, "memory")?)?;
            let dc = DetectionConfig {
                swaps: parse_list(&cfg.pick(swaps, "swaps", "2,3,4,5,6".to_string())?)?,
                trials: cfg.pick(trials, "trials", 2000)?,
                seed: cfg.pick(seed, "seed", 0)?,
                jobs: ctx.jobs,
            };
            let t = evaluate_detection(&memory, &dc)?;
            emit(ctx.output(table, "table")?, detection_csv(&t).to_text().into_bytes())?;
        }
        Command::Compress { indices, chunk_lengths, prefixes, points, stride, out } => {
            let seq = parse_index_sequence(&read_text(ctx.input(indices, "indices")?)?)?;
            let ts: Vec<usize> = parse_list(&cfg.pick(chunk_lengths, "chunk-lengths", "4,6,8".to_string())?)?;
            let prefixes: Vec<usize> = match prefixes.or(cfg.get("prefixes")?) {
                Some(p) => parse_list(&p)?,
                None => log_prefixes(seq.len(), cfg.pick(points, "points", 16)?),
            };
            let table = compression_stats(&seq, &ts, &prefixes, cfg.pick(stride, "stride", 1)?)?;
            for p in &table.clamped {
                eprintln!("warning: prefix {p} exceeds the {} indices available; clamped", seq.len());
            }
            emit(ctx.output(out, "out")?, compression_csv(&table).to_text().into_bytes())?;
        }
        Command::Synth { motifs, motif_length, alphabet, repetitions, noise, seed, out } => {
            let sc = SynthConfig {
                motif_count: cfg.pick(motifs, "motifs", 50)?,
                motif_length: cfg.pick(motif_length, "motif-length", 20)?,
                alphabet_size: cfg.pick(alphabet, "alphabet", 64)?,
                repetitions: cfg.pick(repetitions, "repetitions", 2500)?,
                noise_rate: cfg.pick(noise, "noise", 0.05)?,
                seed: cfg.pick(seed, "seed", 0)?,
            };
            let mut buf = Vec::new();
            write_index_sequence(&mut buf, &synth_corpus(&sc)?)?;
            emit(ctx.output(out, "out")?, buf)?;
        }
        Command::Experiment { kind, out_dir, seed, runs } => {
            let dir = ctx.paths.resolve(&cfg.pick(out_dir, "out-dir", PathBuf::from("results"))?);
            let seed = cfg.pick(seed, "seed", 0)?;
            let runs: Option<usize> = match runs {
                Some(r) => Some(r),
                None => cfg.get("runs")?,
            };
            let summary = experiment::run_experiment(kind, &dir, seed, runs, &ctx)?;
            for c in &summary.checks {
                println!("[{}] {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            return Ok(summary.pass);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
