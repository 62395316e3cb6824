//! Acceptance checks shared by the per-topic integration tests and the
//! `acceptance` target.
#![allow(dead_code)]

pub mod oracles;

use std::fs;
use std::path::Path;
use std::time::Instant;

use nob_core::data::{gen_synthetic, solve_poisson, split_dataset, Dataset, SplitSpec, SynthConfig};
use nob_core::diffcore::{AdamConfig, Tape};
use nob_core::enhancements::{FusionConfig, FusionMode};
use nob_core::harness::{
    emit_report, evaluate_outcome, gradcheck_model, toy_config, toy_dims, toy_input, train, train_run, MetricsRecord,
    ReportFormat, RunConfig, SplitName, CHECKPOINT_FILE,
};
use nob_core::operators::{Family, Model, ModelConfig, ModelInput, ARCHITECTURES};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Verdict {
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Verdict {
        Verdict {
            pass,
            detail: detail.into(),
        }
    }
}

// ---- 1: gradients ----

pub const GRAD_TOL: f64 = 1e-4;

pub fn gradient_suite() -> Verdict {
    let t = Instant::now();
    let mut worst = (0.0f64, String::new());
    let mut failures = Vec::new();
    for arch in ARCHITECTURES {
        match gradcheck_model(arch, FusionConfig::default(), 0) {
            Ok(r) => {
                if !(r.max_rel < GRAD_TOL) {
                    failures.push(format!("{arch} {:.2e} at {}", r.max_rel, r.worst));
                }
                if r.max_rel > worst.0 {
                    worst = (r.max_rel, arch.to_string());
                }
            }
            Err(e) => failures.push(format!("{arch}: {e}")),
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let ok = failures.is_empty() && secs < 60.0;
    let mut detail = format!(
        "{} architectures, worst {:.2e} ({}), {secs:.1} s",
        ARCHITECTURES.len(),
        worst.0,
        worst.1
    );
    if !failures.is_empty() {
        detail.push_str(&format!("; failing: {}", failures.join(", ")));
    }
    Verdict::new(ok, detail)
}

// ---- 2: spectral ----

pub fn spectral_suite() -> Verdict {
    let id = oracles::fourier_identity_case();
    let naive: Vec<oracles::Case> = (0..5).map(oracles::fourier_case_seeded).collect();
    let worst = naive.iter().map(|c| c.err).fold(0.0, f64::max);
    let ok = id.pass() && naive.iter().all(|c| c.pass());
    Verdict::new(
        ok,
        format!("identity filter {:.2e} (< 1e-9), naive DFT worst of 5 inputs {worst:.2e} (< 1e-8)", id.err),
    )
}

// ---- 3: neighbors ----

pub fn neighbor_suite() -> Verdict {
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let (mut bad_r, mut bad_k, mut largest) = (0, 0, 0);
    for _ in 0..100 {
        let n = r.random_range(2..=500);
        largest = largest.max(n);
        let cloud: Vec<[f64; 3]> = (0..n).map(|_| [r.random(), r.random(), r.random()]).collect();
        let queries: Vec<[f64; 3]> = (0..50).map(|_| [r.random(), r.random(), r.random()]).collect();
        let rad = r.random_range(0.02..0.35);
        bad_r += oracles::radius_mismatches(&cloud, &queries, rad);
        bad_r += oracles::radius_mismatches(&cloud, &cloud, rad);
        let k = r.random_range(1..=16.min(n - 1));
        bad_k += oracles::knn_mismatches(&cloud, k);
    }
    Verdict::new(
        bad_r == 0 && bad_k == 0,
        format!("100 clouds up to N = {largest}: {bad_r} radius and {bad_k} kNN mismatches"),
    )
}

// ---- 4: oracles ----

pub fn oracle_suite() -> Verdict {
    let cases = oracles::all();
    let failing: Vec<String> = cases
        .iter()
        .filter(|c| !c.pass())
        .map(|c| format!("{} ({:.2e} >= {:.0e})", c.name, c.err, c.tol))
        .collect();
    let mut detail = format!("{}/{} oracles within tolerance", cases.len() - failing.len(), cases.len());
    if !failing.is_empty() {
        detail.push_str(&format!("; failing: {}", failing.join(", ")));
    }
    Verdict::new(failing.is_empty(), detail)
}

// ---- 5: symmetry ----

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn permuted(input: &ModelInput, perm: &[usize]) -> ModelInput {
    let mut p = input.clone();
    p.coords = perm.iter().map(|&i| input.coords[i]).collect();
    p
}

fn probe_bits(m: &Model, x: &ModelInput) -> Vec<u64> {
    let mut t = Tape::new();
    let v = m.probe(&mut t, x).expect("probe").expect("summary");
    bits(t.value(v).data())
}

/// Number of permutations (out of 20) that break bit-level invariance or equivariance.
pub fn symmetry_violations(arch: &str, seed: u64) -> usize {
    let m = Model::build(&toy_config(arch).unwrap(), &toy_dims(), seed).unwrap();
    let x = toy_input(seed + 100, 16);
    let invariant = matches!(arch, "pointnet" | "gano" | "transolver");
    let base_probe = if invariant { probe_bits(&m, &x) } else { Vec::new() };
    let base = m.predict(&x).unwrap();
    let c = base.cols();
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for _ in 0..20 {
        let mut perm: Vec<usize> = (0..x.coords.len()).collect();
        perm.shuffle(&mut r);
        let xp = permuted(&x, &perm);
        let ok = if invariant {
            probe_bits(&m, &xp) == base_probe
        } else {
            let y = m.predict(&xp).unwrap();
            perm.iter()
                .enumerate()
                .all(|(k, &i)| bits(y.row_slice(k)) == bits(base.row_slice(i)) && y.cols() == c)
        };
        if !ok {
            bad += 1;
        }
    }
    bad
}

pub fn symmetry_suite() -> Verdict {
    let mut parts = Vec::new();
    let mut ok = true;
    for arch in ["pointnet", "gano", "transolver", "gno", "gnot"] {
        let bad = symmetry_violations(arch, 5);
        ok &= bad == 0;
        parts.push(format!("{arch} {}/20", 20 - bad));
    }
    Verdict::new(ok, format!("bit-identical under permutation: {}", parts.join(", ")))
}

// ---- 6: synthetic data ----

/// Plain conjugate gradients for the 7-point Laplacian on the unit cube with
/// zero boundary values and unit source, `n` interior nodes per axis.
pub fn fd_unit_cube(n: usize) -> Vec<f64> {
    let h = 1.0 / (n + 1) as f64;
    let inv = 1.0 / (h * h);
    let idx = |i: usize, j: usize, k: usize| (i * n + j) * n + k;
    let apply = |u: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let mut s = 6.0 * u[idx(i, j, k)];
                    if i > 0 {
                        s -= u[idx(i - 1, j, k)];
                    }
                    if i + 1 < n {
                        s -= u[idx(i + 1, j, k)];
                    }
                    if j > 0 {
                        s -= u[idx(i, j - 1, k)];
                    }
                    if j + 1 < n {
                        s -= u[idx(i, j + 1, k)];
                    }
                    if k > 0 {
                        s -= u[idx(i, j, k - 1)];
                    }
                    if k + 1 < n {
                        s -= u[idx(i, j, k + 1)];
                    }
                    out[idx(i, j, k)] = s * inv;
                }
            }
        }
        out
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let len = n * n * n;
    let mut u = vec![0.0; len];
    let mut res = vec![1.0; len];
    let mut p = res.clone();
    let mut rr = dot(&res, &res);
    for _ in 0..10 * len {
        if rr.sqrt() < 1e-12 {
            break;
        }
        let ap = apply(&p);
        let alpha = rr / dot(&p, &ap);
        for i in 0..len {
            u[i] += alpha * p[i];
            res[i] -= alpha * ap[i];
        }
        let next = dot(&res, &res);
        for i in 0..len {
            p[i] = res[i] + next / rr * p[i];
        }
        rr = next;
    }
    u
}

/// Center value of the unit-cube problem, Richardson-extrapolated from the
/// 33^3 and 65^3 interior grids (second-order error, spacings 1/34 and 1/66).
pub fn richardson_center() -> f64 {
    let c = |n: usize| {
        let u = fd_unit_cube(n);
        let m = n / 2;
        u[(m * n + m) * n + m]
    };
    let (u1, u2) = (c(33), c(65));
    let (h1, h2) = (1.0 / 34.0f64, 1.0 / 66.0f64);
    (h1 * h1 * u2 - h2 * h2 * u1) / (h1 * h1 - h2 * h2)
}

pub struct PoissonChecks {
    pub residual: f64,
    pub linearity: f64,
    pub max_principle_violations: usize,
    pub center: f64,
    pub oracle: f64,
}

impl PoissonChecks {
    pub fn center_rel(&self) -> f64 {
        (self.center - self.oracle).abs() / self.oracle
    }

    pub fn pass(&self) -> bool {
        self.residual < 1e-6 && self.linearity < 1e-7 && self.max_principle_violations == 0 && self.center_rel() < 0.005
    }
}

pub fn poisson_checks() -> PoissonChecks {
    let n = 17;
    let mut residual: f64 = 0.0;
    let mut linearity: f64 = 0.0;
    let mut violations = 0;
    for (h, f0) in [(1.0, 1.0), (0.5, 2.0), (1.5, 0.5), (0.8, 1.3)] {
        let s = solve_poisson(n, h, f0).unwrap();
        residual = residual.max(s.residual_inf());
        let unit = solve_poisson(n, h, 1.0).unwrap();
        linearity = linearity.max(s.u.iter().zip(&unit.u).map(|(a, b)| (a - f0 * b).abs()).fold(0.0, f64::max));
        let len = [1.0, 1.0, h];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let x = s.coord(i, j, k);
                    let bound = (0..3).map(|a| x[a] * (len[a] - x[a]) / 2.0).fold(f64::INFINITY, f64::min);
                    let u = s.u[(i * n + j) * n + k];
                    if !(u > 0.0 && u <= f0 * bound + 1e-9) {
                        violations += 1;
                    }
                }
            }
        }
    }
    let s = solve_poisson(n, 1.0, 1.0).unwrap();
    let m = n / 2;
    PoissonChecks {
        residual,
        linearity,
        max_principle_violations: violations,
        center: s.u[(m * n + m) * n + m],
        oracle: richardson_center(),
    }
}

pub fn synthetic_suite() -> Verdict {
    let c = poisson_checks();
    Verdict::new(
        c.pass(),
        format!(
            "residual {:.1e}, linearity {:.1e}, {} max-principle violations, center {:.6} vs Richardson {:.6} ({:.3}%)",
            c.residual,
            c.linearity,
            c.max_principle_violations,
            c.center,
            c.oracle,
            100.0 * c.center_rel()
        ),
    )
}

// ---- 7, 8: desk-scale training ----

pub const DESK_EPOCHS: usize = 300;
pub const DESK_LR: f64 = 3e-3;
pub const DESK_POINTS: usize = 128;
pub const FUSION_EPOCHS: usize = 60;

pub fn desk_dataset(dir: &Path) -> Dataset {
    if !dir.join("manifest.json").exists() {
        gen_synthetic(&SynthConfig::default(), dir).expect("generate");
    }
    Dataset::load(dir).expect("load")
}

pub fn desk_config(arch: &str, seed: u64, epochs: usize) -> RunConfig {
    let mut mc = ModelConfig::new(arch).unwrap();
    mc.hidden = Some(match arch {
        "gno" => 32,
        _ => 64,
    });
    if arch == "gno" {
        mc.fusion.mode = FusionMode::Concat;
    }
    RunConfig {
        model: mc,
        epochs,
        seed,
        lr: DESK_LR,
        points: Some(DESK_POINTS),
        ..RunConfig::default()
    }
}

pub struct DeskRun {
    pub rel_pct: f64,
    pub seconds: f64,
}

pub fn desk_run(cfg: &RunConfig, ds: &Dataset, split: SplitName) -> DeskRun {
    let t = Instant::now();
    let out = train(cfg, ds, |_| {}).expect("train");
    let seconds = t.elapsed().as_secs_f64();
    let rec = evaluate_outcome(cfg, ds, &out, split).expect("evaluate");
    DeskRun {
        rel_pct: rec.rel_l2_pct.unwrap_or(f64::INFINITY),
        seconds,
    }
}

// ---- 9: protocol ----

pub fn protocol_suite() -> Verdict {
    let split = split_dataset(625, &SplitSpec::default()).unwrap();
    let rc = RunConfig::default();
    let adam = AdamConfig::default();
    let mc = ModelConfig::default();
    let hidden = [Family::BranchTrunk, Family::Graph, Family::Grid, Family::Point].map(Family::default_hidden);
    let ok = split.sizes() == (375, 62, 188)
        && rc.lr == 0.001
        && adam.beta1 == 0.9
        && adam.beta2 == 0.999
        && rc.batch == 5
        && rc.epochs == 1000
        && mc.layers == 3
        && hidden == [128, 32, 16, 128];
    Verdict::new(
        ok,
        format!(
            "split {:?}, lr {}, betas ({}, {}), batch {}, epochs {}, layers {}, hidden {:?}",
            split.sizes(),
            rc.lr,
            adam.beta1,
            adam.beta2,
            rc.batch,
            rc.epochs,
            mc.layers,
            hidden
        ),
    )
}

// ---- 10: determinism and formats ----

pub fn small_dataset(dir: &Path) -> Dataset {
    let cfg = SynthConfig {
        n_samples: 12,
        n: 9,
        ..SynthConfig::default()
    };
    gen_synthetic(&cfg, dir).unwrap();
    Dataset::load(dir).unwrap()
}

pub fn checkpoints_identical(data: &Path, work: &Path) -> bool {
    let mut mc = toy_config("gno").unwrap();
    mc.fusion.mode = FusionMode::Concat;
    let cfg = RunConfig {
        model: mc,
        data: data.to_path_buf(),
        epochs: 3,
        points: Some(40),
        ..RunConfig::default()
    };
    let a = work.join("a");
    let b = work.join("b");
    train_run(&cfg, &a, |_| {}).unwrap();
    train_run(&cfg, &b, |_| {}).unwrap();
    fs::read(a.join(CHECKPOINT_FILE)).unwrap() == fs::read(b.join(CHECKPOINT_FILE)).unwrap()
}

fn file_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

pub fn dataset_round_trips(src: &Path, work: &Path) -> bool {
    let ds = Dataset::load(src).unwrap();
    let copy = work.join("copy");
    Dataset::write(&copy, &ds.manifest, &ds.samples).unwrap();
    let back = Dataset::load(&copy).unwrap();
    let same_values = back.manifest == ds.manifest
        && back.samples.len() == ds.samples.len()
        && back.samples.iter().zip(&ds.samples).all(|(a, b)| {
            let f = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            f(&a.field) == f(&b.field)
                && f(&a.params) == f(&b.params)
                && f(&a.loads) == f(&b.loads)
                && a.coords.iter().flatten().map(|x| x.to_bits()).eq(b.coords.iter().flatten().map(|x| x.to_bits()))
        });
    same_values && file_bytes(src) == file_bytes(&copy)
}

pub fn fixed_records() -> Vec<MetricsRecord> {
    vec![
        MetricsRecord {
            model: "deeponet".into(),
            dataset: "poisson".into(),
            split: "test".into(),
            rel_l2_pct: Some(3.14159),
            mae: 0.0123456,
            s_per_epoch: Some(0.25),
            params: 51201,
            excluded: 0,
        },
        MetricsRecord {
            model: "dcon".into(),
            dataset: "poisson".into(),
            split: "test".into(),
            rel_l2_pct: Some(1.5),
            mae: 0.02,
            s_per_epoch: None,
            params: 9000,
            excluded: 1,
        },
    ]
}

pub const FIXED_MARKDOWN: &str = "\
| Model | Dataset | RelL2% | MAE | s/epoch | Params |
|---|---|---:|---:|---:|---:|
| deeponet | poisson | 3.14 | **1.23e-2** | **0.25** | 51201 |
| dcon | poisson | **1.50** | 2.00e-2 | - | **9000** |
";

pub fn report_is_stable() -> bool {
    let r = fixed_records();
    let md = emit_report(&r, ReportFormat::Markdown);
    let csv = emit_report(&r, ReportFormat::Csv);
    md == emit_report(&r, ReportFormat::Markdown) && csv == emit_report(&r, ReportFormat::Csv) && md == FIXED_MARKDOWN
}

pub fn determinism_suite(work: &Path) -> Verdict {
    let data = work.join("data");
    small_dataset(&data);
    let ckpt = checkpoints_identical(&data, work);
    let round = dataset_round_trips(&data, work);
    let report = report_is_stable();
    Verdict::new(
        ckpt && round && report,
        format!("identical checkpoints {ckpt}, bit-exact dataset round trip {round}, byte-stable report {report}"),
    )
}
