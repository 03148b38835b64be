//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Orderings and runtimes decide PASS/FAIL; magnitude targets are soft and
//! only print WARN lines when they miss. Experiment runtimes are charged as
//! if each setup ran on a fresh session: artifacts a setup reuses from the
//! shared cache count with the seconds they originally took to build.

mod common;

use refinery_core::data::{load_mnist, Split};
use refinery_core::ddpm::make_linear_schedule;
use refinery_core::harness::{run, ExperimentConfig, RunReport, Session, SetupId};
use refinery_core::nn::{check_mlp_gradients, LossHead, Mlp};
use refinery_core::pyramid::Pyramid;
use refinery_core::quantize::dequantize;
use refinery_core::refinery::{
    patch_embed, LatentGrid, RefineryConfig, RefineryModel, TokenMap, TokenPyramid,
};
use refinery_core::{Grid, RngStream};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

#[derive(Default)]
struct Check {
    /// Hard requirements: (description, holds).
    hard: Vec<(String, bool)>,
    /// Soft magnitude targets that only warn.
    soft: Vec<(String, bool)>,
    info: Vec<String>,
}

impl Check {
    fn hard(&mut self, what: impl Into<String>, ok: bool) {
        self.hard.push((what.into(), ok));
    }

    fn soft(&mut self, what: impl Into<String>, ok: bool) {
        self.soft.push((what.into(), ok));
    }

    fn info(&mut self, what: impl Into<String>) {
        self.info.push(what.into());
    }

    fn within(&mut self, label: &str, value: f64, target: f64, rel: f64) {
        let ok = (value - target).abs() <= rel * target;
        self.soft(
            format!("{label} {value:.5} within ±{:.0}% of {target}", rel * 100.0),
            ok,
        );
    }

    fn runtime(&mut self, secs: f64, limit: f64) {
        self.hard(format!("runtime {secs:.0} s < {limit:.0} s"), secs < limit);
    }
}

struct Suite {
    session: Session,
    data: Option<PathBuf>,
    out: PathBuf,
    passed: usize,
    total: usize,
    csv_first: Vec<(SetupId, String)>,
    filters: Vec<String>,
}

impl Suite {
    fn criterion(&mut self, name: &str, f: impl FnOnce(&mut Suite, &mut Check)) {
        let lower = name.to_lowercase();
        if !self.filters.is_empty() && !self.filters.iter().any(|f| lower.contains(f)) {
            return;
        }
        let start = Instant::now();
        let mut c = Check::default();
        let outcome = catch_unwind(AssertUnwindSafe(|| f(self, &mut c)));
        if let Err(p) = outcome {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            c.hard(format!("completed without error ({msg})"), false);
        }
        let ok = !c.hard.is_empty() && c.hard.iter().all(|(_, h)| *h);
        self.total += 1;
        self.passed += ok as usize;
        println!(
            "{} {name} [{:.1} s]",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
        for (what, holds) in &c.hard {
            println!("     {} {what}", if *holds { "ok  " } else { "MISS" });
        }
        for (what, holds) in &c.soft {
            println!("     {} {what}", if *holds { "soft" } else { "WARN" });
        }
        for line in &c.info {
            println!("     info {line}");
        }
    }

    fn experiment(&mut self, setup: SetupId, c: &mut Check) -> Option<(RunReport, f64)> {
        let Some(dir) = self.data.clone() else {
            c.hard(
                "MNIST available (set REFINERY_DATA_DIR or fill data/mnist)",
                false,
            );
            return None;
        };
        let mut cfg = ExperimentConfig::new(setup);
        cfg.data_dir = Some(dir);
        let reused = self.session.reused_seconds();
        let start = Instant::now();
        let rep = run(&cfg, &mut self.session).expect("experiment runs");
        let secs = start.elapsed().as_secs_f64() + self.session.reused_seconds() - reused;
        let dir = self.out.join(setup.as_str());
        rep.write_to(&dir).expect("report written");
        c.info(format!("report in {}", dir.display()));
        self.csv_first.push((setup, rep.to_csv()));
        Some((rep, secs))
    }
}

fn per_seed(rep: &RunReport, method: &str, metric: &str) -> Vec<f64> {
    rep.values(method, metric)
        .into_iter()
        .map(|(_, v)| v)
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn fmt(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.5}"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// `a[i] < b[i]` for every seed.
fn all_less(a: &[f64], b: &[f64]) -> bool {
    !a.is_empty() && a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x < y)
}

fn pyramid_reconstruction(s: &mut Suite, c: &mut Check) {
    let start = Instant::now();
    let images: Vec<Grid> = match &s.data {
        Some(dir) => {
            let ds = load_mnist(dir, Split::Test).expect("MNIST test split");
            let mut rng = RngStream::new(0, 0);
            let idx: Vec<usize> = rng.permutation(ds.len()).into_iter().take(100).collect();
            let flat = ds.flat_images();
            idx.iter()
                .map(|&i| Grid::new(vec![28, 28], flat.row(i).to_vec()).unwrap())
                .collect()
        }
        None => {
            c.hard("MNIST available", false);
            return;
        }
    };
    let mut worst: f64 = 0.0;
    for img in &images {
        for levels in 1..=3 {
            let p = Pyramid::build(img, levels).unwrap();
            worst = worst.max(p.reconstruct().unwrap().sub(img).unwrap().max_abs());
        }
    }
    c.hard(
        format!("max |x − collapse(pyramid(x))| = {worst:.2e} < 1e-6 over 100 images, S=1..3"),
        worst < 1e-6,
    );
    c.runtime(start.elapsed().as_secs_f64(), 10.0);
}

fn gradient_correctness(_: &mut Suite, c: &mut Check) {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for seed in 0..3 {
        let mut rng = RngStream::new(seed, 0);
        let (inp, out, batch) = (6, 8, 4);
        let model = Mlp::new(inp, 4, out, &mut rng);
        let x = rng.randn(&[batch, inp]);
        let labels = (0..batch).map(|_| rng.below(out)).collect();
        let bits = Grid::from_fn(&[batch, out], |_| (rng.uniform() < 0.5) as u8 as f64);
        for head in [
            LossHead::Mse(rng.randn(&[batch, out])),
            LossHead::SoftmaxCe(labels),
            LossHead::BceBits(bits),
        ] {
            let r = check_mlp_gradients(&model, &x, &head, 1e-5).unwrap();
            checked += r.checked;
            c.info(format!(
                "seed {seed} {}: worst relative error {:.2e}",
                head.name(),
                r.worst_relative
            ));
            worst = worst.max(r.worst_relative);
        }
    }
    c.hard(format!("worst relative error {worst:.2e} < 1e-4 over {checked} entries (MSE, softmax CE, bit BCE; hidden width 4)"), worst < 1e-4);
    c.runtime(start.elapsed().as_secs_f64(), 30.0);
}

fn ddpm_marginals(_: &mut Suite, c: &mut Check) {
    let sched = make_linear_schedule(200, 1e-4, 0.02).unwrap();
    let mut prod = 1.0;
    let mut worst: f64 = 0.0;
    for (a, ab) in sched.alphas().iter().zip(sched.alpha_bars()) {
        prod *= a;
        worst = worst.max((prod - ab).abs());
    }
    c.hard(
        format!("ᾱ_t = Π α_s to {worst:.1e} ≤ 1e-12"),
        worst <= 1e-12,
    );

    let n = 100_000;
    let x0 = 0.7;
    let mut rng = RngStream::new(0, 0);
    for t in [1usize, 50, 200] {
        let samples: Vec<f64> = (0..n)
            .map(|_| {
                let mut x = x0;
                for step in 1..=t {
                    let (b, a, _) = sched.at(step).unwrap();
                    x = a.sqrt() * x + b.sqrt() * rng.normal();
                }
                x
            })
            .collect();
        let m = mean(&samples);
        let v = samples.iter().map(|s| (s - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        let ab = sched.alpha_bars()[t - 1];
        let (want_m, want_v) = (ab.sqrt() * x0, 1.0 - ab);
        let (sm, sv) = (
            (want_v / n as f64).sqrt(),
            want_v * (2.0 / (n - 1) as f64).sqrt(),
        );
        c.hard(
            format!("t={t}: mean {m:.5} vs {want_m:.5} (3σ = {:.1e}), var {v:.6} vs {want_v:.6} (3σ = {:.1e})", 3.0 * sm, 3.0 * sv),
            (m - want_m).abs() <= 3.0 * sm && (v - want_v).abs() <= 3.0 * sv,
        );
    }
}

fn enumerable_model(seed: u64) -> RefineryModel {
    let cfg = RefineryConfig {
        latent_height: 2,
        latent_width: 2,
        channels: 2,
        scales: 1,
        codes: 2,
        hidden: 6,
    };
    let mut rng = RngStream::new(seed, 0);
    let mut m = RefineryModel::new(cfg, &mut rng).unwrap();
    let latents: Vec<_> = (0..16)
        .map(|_| LatentGrid::new(rng.randn(&[2, 2, 2]), 0).unwrap())
        .collect();
    m.fit_codebooks(&latents, 0, &mut rng).unwrap();
    let tokens: Vec<_> = latents
        .iter()
        .map(|l| m.forward_tokenize(l).unwrap())
        .collect();
    m.fit_base_prior(&tokens).unwrap();
    m
}

fn exact_likelihood(_: &mut Suite, c: &mut Check) {
    for seed in 0..3 {
        let m = enumerable_model(seed);
        assert_eq!(m.ladder(), &[(2, 2), (1, 1)]);
        let mut total = 0.0;
        let mut count = 0;
        for b in 0..2 {
            for r in 0..16usize {
                let codes = (0..4).map(|i| (r >> i) & 1).collect();
                let t = TokenPyramid {
                    base: TokenMap::new(1, 1, vec![b]).unwrap(),
                    residuals: vec![TokenMap::new(2, 2, codes).unwrap()],
                };
                total += m.log_likelihood(&t).unwrap().exp();
                count += 1;
            }
        }
        c.hard(
            format!("seed {seed}: Σ exp(log p) over {count} pyramids = {total:.12}"),
            count == 32 && (total - 1.0).abs() <= 1e-8,
        );
    }
}

fn refinery_round_trip(_: &mut Suite, c: &mut Check) {
    let mut rng = RngStream::new(5, 0);
    for scales in 1..=2 {
        let l0 = LatentGrid::new(rng.randn(&[4, 4, 3]), 0).unwrap();
        let cfg = RefineryConfig {
            latent_height: 4,
            latent_width: 4,
            channels: 3,
            scales,
            codes: 1,
            hidden: 4,
        };
        let mut m = RefineryModel::new(cfg, &mut rng).unwrap();
        // Codebooks holding exactly the vectors this latent needs.
        let levels = m.gaussian_ladder(&l0).unwrap();
        let flat = |g: &Grid| g.clone().reshape(&[g.len() / 3, 3]).unwrap();
        m.base_codebook =
            Some(refinery_core::quantize::Codebook::new(flat(&levels[scales])).unwrap());
        m.residual_codebooks = Some(
            m.residuals(&levels)
                .unwrap()
                .iter()
                .map(|r| refinery_core::quantize::Codebook::new(flat(r)).unwrap())
                .collect(),
        );
        let back = m.detokenize(&m.forward_tokenize(&l0).unwrap()).unwrap();
        let err = back.values.sub(&l0.values).unwrap().max_abs();
        c.hard(
            format!("exact codebooks, S={scales}: max error {err:.1e} ≤ 1e-9"),
            err <= 1e-9,
        );
    }

    let latents: Vec<LatentGrid> = (0..30)
        .map(|_| LatentGrid::new(rng.randn(&[8, 8, 2]), 0).unwrap())
        .collect();
    let cfg = RefineryConfig {
        latent_height: 8,
        latent_width: 8,
        channels: 2,
        scales: 2,
        codes: 6,
        hidden: 4,
    };
    let mut m = RefineryModel::new(cfg, &mut rng).unwrap();
    m.fit_codebooks(&latents, 0, &mut rng).unwrap();
    let (mut ok, mut slack) = (true, f64::INFINITY);
    for l0 in &latents {
        let t = m.forward_tokenize(l0).unwrap();
        let levels = m.gaussian_ladder(l0).unwrap();
        let residuals = m.residuals(&levels).unwrap();
        let err = |target: &Grid, cb: &refinery_core::quantize::Codebook, map: &TokenMap| {
            let q = dequantize(cb, &map.codes).unwrap();
            target
                .data()
                .iter()
                .zip(q.data())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        let mut bound = err(&levels[2], m.base_codebook.as_ref().unwrap(), &t.base);
        for k in 0..2 {
            bound += err(
                &residuals[k],
                &m.residual_codebooks.as_ref().unwrap()[k],
                t.residual(k),
            );
        }
        let actual = m
            .detokenize(&t)
            .unwrap()
            .values
            .sub(&l0.values)
            .unwrap()
            .max_abs();
        ok &= actual <= bound + 1e-12;
        slack = slack.min(bound - actual);
    }
    c.hard(
        format!("k-means codebooks: error ≤ Σ per-scale quantization error on 30 latents (min slack {slack:.3})"),
        ok,
    );
}

fn setup_a(s: &mut Suite, c: &mut Check) {
    let Some((rep, secs)) = s.experiment(SetupId::A, c) else {
        return;
    };
    let (pm, lm) = (
        per_seed(&rep, "Pixel-MLP", "mse_sigma_train"),
        per_seed(&rep, "Latent-MLP", "mse_sigma_train"),
    );
    let (pe, le) = (
        per_seed(&rep, "Pixel-MLP", "epochs_to_target"),
        per_seed(&rep, "Latent-MLP", "epochs_to_target"),
    );
    let (ps, ls) = (
        per_seed(&rep, "Pixel-MLP", "mse_sigma_shift"),
        per_seed(&rep, "Latent-MLP", "mse_sigma_shift"),
    );
    c.hard(
        format!(
            "latent MSE@0.20 < pixel per seed: [{}] vs [{}]",
            fmt(&lm),
            fmt(&pm)
        ),
        all_less(&lm, &pm),
    );
    c.hard(
        format!("latent epochs-to-0.018 < pixel per seed: {le:?} vs {pe:?}"),
        all_less(&le, &pe),
    );
    c.hard(
        format!(
            "latent MSE@0.30 < pixel per seed: [{}] vs [{}]",
            fmt(&ls),
            fmt(&ps)
        ),
        all_less(&ls, &ps),
    );
    c.runtime(secs, 1200.0);
    c.within("pixel MSE@0.20", mean(&pm), 0.0195, 0.25);
    c.within("latent MSE@0.20", mean(&lm), 0.0158, 0.25);
}

fn setup_b(s: &mut Suite, c: &mut Check) {
    let Some((rep, secs)) = s.experiment(SetupId::B, c) else {
        return;
    };
    let (reg, soft, bit) = ("Regression (MSE)", "Softmax-64 (CE)", "Bitwise-8 (BCE)");
    let (rm, sm) = (
        per_seed(&rep, reg, "dequantized_mse"),
        per_seed(&rep, soft, "dequantized_mse"),
    );
    let (rv, sv, bv) = (
        per_seed(&rep, reg, "grad_var"),
        per_seed(&rep, soft, "grad_var"),
        per_seed(&rep, bit, "grad_var"),
    );
    c.hard(
        format!(
            "Softmax-64 dequantized MSE < Regression per seed: [{}] vs [{}]",
            fmt(&sm),
            fmt(&rm)
        ),
        all_less(&sm, &rm),
    );
    c.hard(
        format!(
            "grad var Bitwise-8 < Softmax-64 < Regression per seed: [{}] < [{}] < [{}]",
            fmt(&bv),
            fmt(&sv),
            fmt(&rv)
        ),
        all_less(&bv, &sv) && all_less(&sv, &rv),
    );
    c.runtime(secs, 1200.0);
    c.within("Softmax-64 dequantized MSE", mean(&sm), 0.0181, 0.25);
    c.info(format!(
        "Bitwise-8 dequantized MSE [{}]; nearest-code oracle [{}]",
        fmt(&per_seed(&rep, bit, "dequantized_mse")),
        fmt(&per_seed(&rep, "Nearest code (oracle)", "dequantized_mse"))
    ));
}

fn setup_c(s: &mut Suite, c: &mut Check) {
    let Some((rep, secs)) = s.experiment(SetupId::C, c) else {
        return;
    };
    let (one, two) = ("Single-shot (one MLP)", "Coarse→fine (2 MLPs)");
    let (om, tm) = (per_seed(&rep, one, "mse"), per_seed(&rep, two, "mse"));
    let (oh, th) = (
        per_seed(&rep, one, "hf_psnr"),
        per_seed(&rep, two, "hf_psnr"),
    );
    let (oe, te) = (
        per_seed(&rep, one, "epochs_to_target"),
        per_seed(&rep, two, "epochs_to_target"),
    );
    c.hard(
        format!(
            "two-stage MSE < single-shot per seed: [{}] vs [{}]",
            fmt(&tm),
            fmt(&om)
        ),
        all_less(&tm, &om),
    );
    c.hard(
        format!(
            "two-stage HF-PSNR > single-shot per seed: [{}] vs [{}]",
            fmt(&th),
            fmt(&oh)
        ),
        all_less(&oh, &th),
    );
    c.hard(
        format!("two-stage epochs-to-0.018 < single-shot per seed: {te:?} vs {oe:?}"),
        all_less(&te, &oe),
    );
    let (op, tp) = (
        per_seed(&rep, one, "params")[0],
        per_seed(&rep, two, "params")[0],
    );
    c.hard(
        format!("parameters matched within 1%: {tp} vs {op}"),
        (tp - op).abs() <= 0.01 * op,
    );
    c.runtime(secs, 1200.0);
    c.within("two-stage MSE", mean(&tm), 0.0164, 0.25);
    c.within("single-shot MSE", mean(&om), 0.0193, 0.25);
}

fn depth_sweep(s: &mut Suite, c: &mut Check) {
    let Some((rep, secs)) = s.experiment(SetupId::Depth, c) else {
        return;
    };
    let m: Vec<Vec<f64>> = (1..=3)
        .map(|d| per_seed(&rep, &format!("S={d}"), "mse"))
        .collect();
    c.hard(
        format!(
            "MSE(S=2) < MSE(S=1) per seed: [{}] vs [{}]",
            fmt(&m[1]),
            fmt(&m[0])
        ),
        all_less(&m[1], &m[0]),
    );
    let gap = mean(&m[2]) - mean(&m[1]);
    c.hard(
        format!("mean MSE(3) − MSE(2) = {gap:+.5} ∈ (−0.002, +0.0005)"),
        gap > -0.002 && gap < 0.0005,
    );
    let t: Vec<f64> = (1..=3)
        .map(|d| {
            rep.mean_timing(&format!("S={d}"), "train s/epoch")
                .unwrap_or(f64::NAN)
        })
        .collect();
    c.hard(
        format!(
            "time/epoch monotone in S: {:.2} < {:.2} < {:.2} s (rel. 1.00, {:.2}, {:.2})",
            t[0],
            t[1],
            t[2],
            t[1] / t[0],
            t[2] / t[0]
        ),
        t[0] < t[1] && t[1] < t[2],
    );
    c.runtime(secs, 1800.0);
    for (d, v) in m.iter().enumerate() {
        c.info(format!("S={}: per-seed MSE [{}]", d + 1, fmt(v)));
    }
}

/// Seconds per sample for a refinery model with `scales` scales. Timing does
/// not depend on the predictor weights, so these models are left untrained.
fn refinery_seconds_per_sample(
    dir: &std::path::Path,
    scales: usize,
    samples: usize,
) -> (f64, usize) {
    let ds = load_mnist(dir, Split::Train).unwrap().flat_images();
    let latents: Vec<_> = (0..1000)
        .map(|i| patch_embed(&Grid::new(vec![28, 28], ds.row(i).to_vec()).unwrap()).unwrap())
        .collect();
    let cfg = RefineryConfig {
        latent_height: 14,
        latent_width: 14,
        channels: 4,
        scales,
        codes: 64,
        hidden: 128,
    };
    let mut rng = RngStream::new(0, 0);
    let mut m = RefineryModel::new(cfg, &mut rng).unwrap();
    m.fit_codebooks(&latents, 0, &mut rng).unwrap();
    let tokens: Vec<_> = latents
        .iter()
        .map(|l| m.forward_tokenize(l).unwrap())
        .collect();
    m.fit_base_prior(&tokens).unwrap();
    let start = Instant::now();
    let mut stages = 0;
    for _ in 0..samples {
        stages = m.generate(&mut rng, 1.0).unwrap().stages;
    }
    (start.elapsed().as_secs_f64() / samples as f64, stages)
}

fn step_economy(s: &mut Suite, c: &mut Check) {
    let Some((rep, _)) = s.experiment(SetupId::Refinery, c) else {
        return;
    };
    let scales = ExperimentConfig::new(SetupId::Refinery).refinery_scales;
    let steps = per_seed(&rep, "Refinery", "steps");
    let ddpm_steps = per_seed(&rep, "DDPM", "steps");
    c.hard(
        format!(
            "refinery stages = S+1 = {} for every seed: {steps:?}",
            scales + 1
        ),
        steps.iter().all(|&v| v == (scales + 1) as f64),
    );
    c.hard(
        format!("DDPM network evaluations = T = 200 for every seed: {ddpm_steps:?}"),
        ddpm_steps.iter().all(|&v| v == 200.0),
    );
    let ddpm = rep.mean_timing("DDPM", "s/sample").unwrap_or(f64::NAN);
    let refinery = rep.mean_timing("Refinery", "s/sample").unwrap_or(f64::NAN);
    c.hard(
        format!("trained S={scales}: DDPM/refinery per-sample time = {ddpm:.4}/{refinery:.5} s = {:.1}× > 1", ddpm / refinery),
        ddpm / refinery > 1.0,
    );
    let dir = s.data.clone().unwrap();
    for extra in (1..=3).filter(|&k| k != scales) {
        let (secs, stages) = refinery_seconds_per_sample(&dir, extra, 64);
        c.hard(
            format!(
                "S={extra}: {stages} stages, DDPM/refinery = {:.1}× > 1",
                ddpm / secs
            ),
            stages == extra + 1 && ddpm / secs > 1.0,
        );
    }
    let nll = per_seed(&rep, "Refinery", "train_nll_final");
    let nll0 = per_seed(&rep, "Refinery", "train_nll_initial");
    c.info(format!(
        "train NLL/site initial [{}] final [{}]",
        fmt(&nll0),
        fmt(&nll)
    ));
}

fn determinism(s: &mut Suite, c: &mut Check) {
    let Some(dir) = s.data.clone() else {
        c.hard("MNIST available", false);
        return;
    };
    let mut cfg = ExperimentConfig::new(SetupId::B);
    cfg.data_dir = Some(dir.clone());
    let first = match s.csv_first.iter().find(|(id, _)| *id == SetupId::B) {
        Some((_, csv)) => csv.clone(),
        None => run(&cfg, &mut Session::new(Some(dir.clone())))
            .unwrap()
            .to_csv(),
    };
    let again = run(&cfg, &mut Session::new(Some(dir.clone())))
        .unwrap()
        .to_csv();
    c.hard(
        format!(
            "Setup B rerun on a fresh session: CSV byte-identical ({} bytes)",
            first.len()
        ),
        again == first,
    );
    for setup in [SetupId::A, SetupId::C, SetupId::Depth, SetupId::Refinery] {
        let mut cfg = ExperimentConfig::new(setup);
        cfg.data_dir = Some(dir.clone());
        for (k, v) in [
            ("seeds", "0,1"),
            ("epochs", "2"),
            ("train_limit", "1500"),
            ("test_limit", "300"),
            ("ae_epochs", "2"),
            ("refinery_epochs", "1"),
            ("refinery_train_limit", "200"),
            ("ddpm_epochs", "1"),
            ("ddpm_train_limit", "300"),
            ("samples", "4"),
        ] {
            cfg.set(k, v).unwrap();
        }
        let a = run(&cfg, &mut Session::new(Some(dir.clone())))
            .unwrap()
            .to_csv();
        let b = run(&cfg, &mut Session::new(Some(dir.clone())))
            .unwrap()
            .to_csv();
        c.hard(
            format!("{setup} (reduced config) run twice: CSV byte-identical"),
            a == b,
        );
    }
}

fn main() {
    let out = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let data = common::mnist_dir();
    println!(
        "acceptance suite; MNIST: {data:?}; reports under {}",
        out.display()
    );
    let mut s = Suite {
        session: Session::new(data.clone()),
        data,
        out,
        passed: 0,
        total: 0,
        csv_first: Vec::new(),
        // Substring filters, as with libtest; flags cargo passes are ignored.
        filters: std::env::args()
            .skip(1)
            .filter(|a| !a.starts_with('-'))
            .map(|a| a.to_lowercase())
            .collect(),
    };
    s.criterion("Pyramid perfect reconstruction", pyramid_reconstruction);
    s.criterion("Gradient correctness", gradient_correctness);
    s.criterion("DDPM marginal consistency", ddpm_marginals);
    s.criterion("Refinery exact likelihood", exact_likelihood);
    s.criterion("Refinery round trip", refinery_round_trip);
    s.criterion("Setup A: pixel vs latent denoising", setup_a);
    s.criterion("Setup B: discrete prediction heads", setup_b);
    s.criterion("Setup C: coarse-to-fine vs single-shot", setup_c);
    s.criterion("Depth sweep", depth_sweep);
    s.criterion("Refinery vs DDPM step economy", step_economy);
    s.criterion("Determinism", determinism);
    println!("{}/{} criteria passed", s.passed, s.total);
}
