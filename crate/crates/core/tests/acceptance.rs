//! Acceptance checks. Run with `cargo test -p rankcode --test acceptance`.
//! Prints one PASS/FAIL line per criterion and exits non-zero if any fail.

use std::collections::HashSet;
use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use rankcode::generator::generate;
use rankcode::harness::{
    compression_stats, deviant_stream, half_split_corpus, log_prefixes, random_chunks, synth_corpus,
    walk_corpus, SynthConfig,
};
use rankcode::io::compression_csv;
use rankcode::novelty::{entropy_profile, evaluate_detection, DetectionConfig};
use rankcode::quantizer::{decode, encode, topology_score, train_som, SomConfig};
use rankcode::{
    build_memory, pilot_reconstruction, rank_transform, window_sequence, GenerationConfig, IndexChunk,
    RankChunk, WindowSpec,
};
use rankcode::rng::seeded_rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

// smaller-count plus equal-and-earlier count
fn counting_rank(x: &[usize]) -> Vec<usize> {
    (0..x.len())
        .map(|i| (0..x.len()).filter(|&j| x[j] < x[i] || (x[j] == x[i] && j < i)).count())
        .collect()
}

fn all_sequences(len: usize, alphabet: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|p| (0..alphabet).map(move |v| [p.clone(), vec![v]].concat()))
            .collect();
    }
    out
}

fn perms(n: usize) -> Vec<Vec<usize>> {
    all_sequences(n, n)
        .into_iter()
        .filter(|p| p.iter().collect::<HashSet<_>>().len() == n)
        .collect()
}

fn c1_rank_oracle() -> Outcome {
    let mut cases = 0;
    let mut bad = 0;
    for t in 1..=4 {
        for x in all_sequences(t, 5) {
            cases += 1;
            if rank_transform(&x).unwrap().ranks() != counting_rank(&x).as_slice() {
                bad += 1;
            }
        }
    }
    outcome(bad == 0, format!("{cases} chunks (t = 1..4, alphabet 5), {bad} mismatches"))
}

fn c2_windowing() -> Outcome {
    let seq: Vec<usize> = (0..41_739).map(|i| i % 64).collect();
    let paper = window_sequence(&seq, WindowSpec::new(6, 1).unwrap()).unwrap().len();
    let mut rng = seeded_rng(2);
    let mut bad = 0;
    for _ in 0..1000 {
        let t = rng.gen_range(2..=12);
        let s = rng.gen_range(1..=t);
        let len = rng.gen_range(t..=400);
        let x: Vec<usize> = (0..len).map(|_| rng.gen_range(0..9)).collect();
        let windows = window_sequence(&x, WindowSpec::new(t, s).unwrap()).unwrap();
        let starts: Vec<usize> = (0..len).step_by(s).take_while(|k| k + t <= len).collect();
        let same = windows.len() == starts.len()
            && windows.iter().zip(&starts).all(|(w, &k)| w.values() == &x[k..k + t]);
        bad += usize::from(!same);
    }
    outcome(paper == 41_734 && bad == 0, format!("41,739 frames -> {paper} windows; {bad}/1000 random triples wrong"))
}

fn c3_memory_consistency() -> Outcome {
    let mut rng = seeded_rng(3);
    let corpus = random_chunks(5000, 6, 64, &mut rng);
    let m = build_memory(&corpus).unwrap();
    let mut worst_row = 0f64;
    let mut worst_score = 0f64;
    for (i, c) in m.repository().iter().enumerate() {
        let a = m.rank_activations(c).unwrap();
        for (x, y) in a.iter().zip(m.w_recall_row(i)) {
            worst_row = worst_row.max((x - y).abs());
        }
        let best = m.recall_activations(c).unwrap().into_iter().fold(f64::MIN, f64::max);
        worst_score = worst_score.max((best - 1.0).abs());
    }
    outcome(
        worst_row <= 1e-12 && worst_score <= 1e-9,
        format!("T = 5000, U = {}; max row gap {worst_row:.1e}, max |score - 1| {worst_score:.1e}", m.pattern_count()),
    )
}

fn c4_self_match() -> Outcome {
    let mut pairs = 0usize;
    let mut bad = 0usize;
    for t in 2..=5 {
        let ps = perms(t);
        let modulated: Vec<Vec<f64>> = ps.iter().map(|p| p.iter().map(|&r| 1.0 / (r as f64 + 1.0)).collect()).collect();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        for (i, a) in modulated.iter().enumerate() {
            let own = dot(a, a);
            for (j, b) in modulated.iter().enumerate() {
                if i != j {
                    pairs += 1;
                    bad += usize::from(dot(a, b) >= own);
                }
            }
        }
        // the library's rank layer must agree with the direct products
        let chunks: Vec<IndexChunk> = ps.iter().map(|p| IndexChunk::new(p.clone())).collect();
        let m = build_memory(&chunks).unwrap();
        for (i, p) in ps.iter().enumerate() {
            let a = m.rank_activations(p).unwrap();
            let own = m.pattern_id(&RankChunk::from_ranks(p.clone()).unwrap()).unwrap();
            bad += usize::from(a.iter().enumerate().any(|(j, &v)| j != own && v >= a[own]));
            bad += usize::from((a[own] - dot(&modulated[i], &modulated[i])).abs() > 1e-12);
        }
    }
    outcome(bad == 0, format!("{pairs} ordered pairs over t = 2..5, {bad} violations"))
}

fn c5_pilot() -> Outcome {
    let mut rng = seeded_rng(5);
    let corpus = random_chunks(1000, 6, 64, &mut rng);
    let m = build_memory(&corpus).unwrap();
    let coverage = m.pattern_count();
    let mut converged = 0;
    let mut worst_iters = 0;
    for trial in 0..100 {
        // only the first chunk of each rank pattern can be recalled
        let target = m.entry(m.first_entry(trial % coverage)).clone();
        let mut mask = [true; 6];
        mask[rng.gen_range(0..6)] = false;
        let config = GenerationConfig::new(6, 64, 6, 500 + trial as u64);
        let r = pilot_reconstruction(&target, &mask, &m, &config).unwrap();
        if r.converged && r.final_error == 0 && r.iterations_used <= 1000 {
            converged += 1;
        }
        worst_iters = worst_iters.max(r.iterations_used);
    }
    outcome(
        coverage >= 100 && converged == 100,
        format!("{coverage} patterns; {converged}/100 reach zero error, slowest {worst_iters} iterations"),
    )
}

fn c6_c7_generation() -> (Outcome, Outcome) {
    let mut exact = 0;
    let mut converged_runs = 0;
    let mut ungrammatical = 0;
    let mut max_step_iters = 0;
    for run in 0..100u64 {
        let wc = walk_corpus(36, 6, 64, 1000, 600 + run).unwrap();
        let m = build_memory(&wc.corpus).unwrap();
        let stored: HashSet<&[usize]> = wc.corpus.iter().map(|c| c.values()).collect();
        let config = GenerationConfig::new(6, 64, 36, 700 + run);
        let out = generate(&wc.walk[..5], &m, &config, Some(&wc.walk)).unwrap();
        let all_steps = out.failed_step.is_none() && out.trace.steps.iter().all(|s| s.iterations_used <= 1000);
        max_step_iters = max_step_iters.max(out.trace.steps.iter().map(|s| s.iterations_used).max().unwrap_or(0));
        if all_steps {
            converged_runs += 1;
            if out.sequence.windows(6).any(|w| !stored.contains(w)) {
                ungrammatical += 1;
            }
        }
        exact += usize::from(all_steps && out.sequence == wc.walk);
    }
    (
        outcome(exact >= 95, format!("{exact}/100 runs reproduce all 36 indices; busiest step {max_step_iters} iterations")),
        outcome(
            ungrammatical == 0,
            format!("{converged_runs} converged runs, {ungrammatical} with a window outside the repository"),
        ),
    )
}

fn c8_global_deviant() -> Outcome {
    let mut hits = 0;
    let mut min_margin = f64::INFINITY;
    let mut patterns = 0;
    for run in 0..100u64 {
        let mut rng = seeded_rng(800 + run);
        let corpus = half_split_corpus(6, 64, 428, &mut rng).unwrap();
        let m = build_memory(&corpus).unwrap();
        patterns = m.pattern_count();
        let stream = deviant_stream(&m, 8, 4, 10_000, &mut rng).unwrap();
        let profile = entropy_profile(&stream.chunks, &m).unwrap();
        let others = profile.values.iter().enumerate().filter(|(i, _)| *i != 4).map(|(_, &v)| v);
        let margin = profile.values[4] - others.fold(f64::MIN, f64::max);
        min_margin = min_margin.min(margin);
        hits += usize::from(profile.argmax() == Some(4) && margin > 0.0);
    }
    outcome(
        patterns >= 50 && hits >= 95,
        format!("{patterns} patterns; peak at chunk #5 in {hits}/100 streams, smallest margin {min_margin:.4} nats"),
    )
}

fn c9_c10_detection() -> (Outcome, Outcome) {
    let seq = synth_corpus(&SynthConfig {
        motif_count: 30,
        motif_length: 20,
        alphabet_size: 64,
        repetitions: 500,
        noise_rate: 0.05,
        seed: 9,
    })
    .unwrap();
    let corpus = window_sequence(&seq, WindowSpec::new(6, 1).unwrap()).unwrap();
    let m = build_memory(&corpus).unwrap();
    let config = DetectionConfig { swaps: (2..=6).collect(), trials: 2000, seed: 10, jobs: 4 };
    let table = evaluate_detection(&m, &config).unwrap();

    let patterns: HashSet<Vec<usize>> = corpus.iter().map(|c| counting_rank(c)).collect();
    let mut oracle_disagreements = 0;
    let mut fn_unconfirmed = 0;
    for o in &table.outcomes {
        let rank_novel = !patterns.contains(&counting_rank(&o.perturbed));
        oracle_disagreements += usize::from(rank_novel != o.rank_novel || o.rank_flagged != rank_novel);
        let in_corpus = corpus.iter().any(|c| c == &o.perturbed);
        oracle_disagreements += usize::from(in_corpus == o.index_novel);
        if o.index_novel && !o.index_flagged {
            // a miss must be an exact collision with a different stored chunk
            let collides = corpus.iter().enumerate().any(|(i, c)| i != o.source_id && c == &o.perturbed);
            fn_unconfirmed += usize::from(!collides);
        }
    }
    let rank_ok = table.rows.iter().all(|r| r.rank_fp_pct == 0.0 && r.rank_fn_pct == 0.0);
    let index_ok = table.rows.iter().all(|r| r.index_fp_pct <= 1.0 && r.index_fn_pct <= 1.0);
    let fmt = |f: fn(&rankcode::DetectionRow) -> (f64, f64)| {
        table
            .rows
            .iter()
            .map(|r| {
                let (a, b) = f(r);
                format!("n={} {a:.2}/{b:.2}", r.n_swaps)
            })
            .collect::<Vec<_>>()
            .join(", ")
    };
    (
        outcome(
            rank_ok && oracle_disagreements == 0,
            format!(
                "T = {}, 2000 trials per n; rank FP/FN % {}; {oracle_disagreements} oracle disagreements",
                m.len(),
                fmt(|r| (r.rank_fp_pct, r.rank_fn_pct))
            ),
        ),
        outcome(
            index_ok && fn_unconfirmed == 0,
            format!(
                "index FP/FN % {}; {fn_unconfirmed} misses without a stored collision",
                fmt(|r| (r.index_fp_pct, r.index_fn_pct))
            ),
        ),
    )
}

fn c11_compression() -> Outcome {
    let seq = synth_corpus(&SynthConfig {
        motif_count: 50,
        motif_length: 20,
        alphabet_size: 64,
        repetitions: 2500,
        noise_rate: 0.05,
        seed: 11,
    })
    .unwrap();
    let mut prefixes = log_prefixes(seq.len(), 16);
    prefixes.extend([40_000, 45_000]);
    let table = compression_stats(&seq, &[4, 6, 8], &prefixes, 1).unwrap();
    let path = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("compression.csv");
    std::fs::write(&path, compression_csv(&table).to_text()).unwrap();

    let mut bounded = true;
    for r in &table.rows {
        let fact: usize = (1..=r.chunk_length).product();
        bounded &= r.unique_rank_chunk_count <= r.window_count.min(fact);
        bounded &= r.unique_rank_chunk_count <= r.unique_index_chunk_count;
    }
    let curve = table.curve(6);
    let monotone = curve.windows(2).all(|w| {
        w[0].unique_index_chunk_count <= w[1].unique_index_chunk_count
            && w[0].unique_rank_chunk_count <= w[1].unique_rank_chunk_count
    });
    let at = |p: usize| curve.iter().find(|r| r.frame_count == p).unwrap();
    let (mid, late, end) = (at(40_000), at(45_000), at(seq.len()));
    // over the last fifth of the data
    let rank_gain = end.unique_rank_chunk_count - mid.unique_rank_chunk_count;
    let index_gain = end.unique_index_chunk_count - mid.unique_index_chunk_count;
    let plateau = end.unique_rank_chunk_count <= 720 && rank_gain * 100 <= end.unique_rank_chunk_count;
    let growing = late.unique_index_chunk_count < end.unique_index_chunk_count && index_gain > 10 * rank_gain.max(1);
    outcome(
        bounded && monotone && plateau && growing,
        format!(
            "t=6 at 50,000: {} rank / {} index chunks; last fifth adds {rank_gain} rank vs {index_gain} index; csv {}",
            end.unique_rank_chunk_count,
            end.unique_index_chunk_count,
            path.display()
        ),
    )
}

fn c12_quantizer() -> Outcome {
    let mut rng = seeded_rng(12);
    let centres = [(0.0, 0.0), (6.0, 0.0), (3.0, 5.0)];
    let noise = Normal::new(0.0, 0.4).unwrap();
    let frames: Vec<Vec<f64>> = (0..900)
        .map(|i| {
            let (x, y) = centres[i % 3];
            vec![x + noise.sample(&mut rng), y + noise.sample(&mut rng)]
        })
        .collect();
    let config = SomConfig::new(12, 20, 77);
    let a = train_som(&frames, &config).unwrap();
    let b = train_som(&frames, &config).unwrap();
    let rows: Vec<Vec<f64>> = a.rows().map(<[f64]>::to_vec).collect();
    let ids = encode(&rows, &a).unwrap();
    let round_trip = decode(&ids, &a).unwrap() == rows && ids == (0..12).collect::<Vec<_>>();
    let same_bits = a.rows().zip(b.rows()).all(|(x, y)| x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits()));
    let score = topology_score(&a).unwrap();
    outcome(
        round_trip && same_bits && score < 1.0,
        format!("round trip {round_trip}, bit-identical retrain {same_bits}, topology score {score:.3}"),
    )
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |id: &str, name: &str, start: Instant, o: Outcome| {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!o.pass);
        println!("[{tag}] {id:>2} {name}: {} ({:.2}s)", o.detail, start.elapsed().as_secs_f64());
    };

    let s = Instant::now();
    report("1", "rank transform vs counting oracle", s, c1_rank_oracle());
    let s = Instant::now();
    report("2", "window arithmetic", s, c2_windowing());
    let s = Instant::now();
    report("3", "memory consistency", s, c3_memory_consistency());
    let s = Instant::now();
    report("4", "self-match dominance", s, c4_self_match());
    let s = Instant::now();
    report("5", "pilot convergence", s, c5_pilot());
    let s = Instant::now();
    let (c6, c7) = c6_c7_generation();
    report("6", "sequence generation", s, c6);
    report("7", "grammaticality", s, c7);
    let s = Instant::now();
    report("8", "global deviant entropy peak", s, c8_global_deviant());
    let s = Instant::now();
    let (c9, c10) = c9_c10_detection();
    report("9", "rank-level detection", s, c9);
    report("10", "index-level detection", s, c10);
    let s = Instant::now();
    report("11", "compression bounds", s, c11_compression());
    let s = Instant::now();
    report("12", "quantizer round trip and determinism", s, c12_quantizer());

    println!("acceptance: {} of 12 passed", 12 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
