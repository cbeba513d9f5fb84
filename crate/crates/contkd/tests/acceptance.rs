//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as PtConfig, TestRunner};

use contkd::ablate::{execute_ablation, Arm};
use contkd::config::{
    ActivationName, Generator, HandoffName, LadderName, PsiKind, RunConfig, TeacherKind,
};
use contkd::format::{decode_checkpoint, decode_dataset, encode_checkpoint, encode_dataset};
use contkd::run::execute;
use contkd::sweep::{execute_sweep, MeanStd, SweepOutcome};
use contkd_core::losses::continuation_kd_loss;
use contkd_core::schedules::{PsiSchedule, PsiSpec, TemperatureLadder};
use contkd_core::{Graph, Method, Tensor};

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

/// Small two-class task used by the exactness and plumbing checks.
fn two_class() -> RunConfig {
    let mut c = RunConfig::default();
    c.data.generator = Generator::GaussianMixture;
    c.data.n_classes = 2;
    c.data.dim = 4;
    c.data.n_per_class = 120;
    c.data.spread = 1.5;
    c.data.separation = 2.0;
    c.model.student_hidden = vec![8];
    c.model.teacher_hidden = vec![32, 32];
    c.model.teacher_epochs = Some(6);
    c.schedule.epochs = 18;
    c.schedule.t_max = 4;
    c.optimizer.learning_rate = 0.005;
    c.optimizer.batch_size = 16;
    c
}

/// Noisy sine regression with a 1 → 128 → 128 → 1 tanh student.
fn noisy_sine() -> RunConfig {
    let mut c = RunConfig::default();
    c.data.generator = Generator::NoisySine;
    c.data.n_samples = 3000;
    c.data.noise_freq = 6.0;
    c.data.noise_amp = 0.3;
    c.model.activation = ActivationName::Tanh;
    c.model.student_hidden = vec![128, 128];
    c.model.teacher = TeacherKind::Table;
    c.method.margin = 0.1;
    c.schedule.epochs = 100;
    c.schedule.t_max = 10;
    c.schedule.psi = PsiKind::CappedRamp;
    c.schedule.psi_denominator = 200.0;
    c.schedule.psi_cutover = 100;
    c.optimizer.learning_rate = 0.05;
    c
}

/// Ten-class task with the 256 / 64 / 16 teacher, assistant and student.
fn capacity_gap() -> RunConfig {
    let mut c = RunConfig::default();
    c.data.n_classes = 10;
    c.data.dim = 16;
    c.data.n_per_class = 500;
    c.data.spread = 1.0;
    c.data.separation = 3.0;
    c.model.teacher_hidden = vec![256];
    c.model.ta_hidden = Some(vec![64]);
    c.model.student_hidden = vec![16];
    c.schedule.epochs = 30;
    c.schedule.t_max = 10;
    c.optimizer.learning_rate = 0.01;
    c
}

fn gradient_check() -> Verdict {
    let out = Command::new(env!("CARGO_BIN_EXE_contkd"))
        .args(["gradcheck", "--points", "100"])
        .output()
        .expect("binary runs");
    let text = String::from_utf8_lossy(&out.stdout);
    let losses = [
        "cross_entropy",
        "mse",
        "vanilla_kd",
        "annealing",
        "continuation",
        "composite",
    ];
    let listed = losses
        .iter()
        .all(|l| text.lines().any(|line| line.starts_with(l) && line.ends_with(" ok")));
    let worst = text
        .lines()
        .filter_map(|l| l.split("max_rel_error=").nth(1))
        .filter_map(|v| v.split_whitespace().next()?.parse::<f64>().ok())
        .fold(0.0, f64::max);
    verdict(
        out.status.success() && listed,
        format!("6 losses x 100 points, worst relative error {worst:.2e} (tolerance 1e-4)"),
    )
}

fn annealing_special_case(root: &Path) -> Verdict {
    let mut failures = Vec::new();
    for seed in [0, 1, 2] {
        let mut cont = two_class();
        cont.method.name = "continuation".into();
        cont.method.seed = seed;
        cont.method.margin = 0.0;
        cont.schedule.psi = PsiKind::Step;
        cont.schedule.psi_switch_after = 12;
        let mut ann = two_class();
        ann.method.name = "annealing".into();
        ann.method.seed = seed;
        ann.method.stage1_epochs = Some(12);
        ann.method.handoff = HandoffName::Continue;
        ann.method.ladder = LadderName::WholeRun;
        let a = execute(&cont, root).expect("continuation run");
        let b = execute(&ann, root).expect("annealing run");
        let losses_equal = a
            .record
            .train_losses()
            .iter()
            .zip(b.record.train_losses())
            .all(|(x, y)| x.to_bits() == y.to_bits());
        let ckpt_equal = std::fs::read(a.dir.join("final.ckpt")).unwrap()
            == std::fs::read(b.dir.join("final.ckpt")).unwrap();
        if !(losses_equal && ckpt_equal && a.record.rows.len() == 18) {
            failures.push(seed);
        }
    }
    verdict(
        failures.is_empty(),
        format!("3 seeds x 18 epochs, loss sequences and final checkpoints bit-equal; mismatching seeds {failures:?}"),
    )
}

fn schedule_invariants() -> Verdict {
    let mut checked = 0u64;
    for t_max in 1..=50u32 {
        for n in t_max..=500 {
            let ladder = TemperatureLadder::new(t_max, n).unwrap();
            let (mut prev_t, mut prev_phi) = (u32::MAX, 0.0);
            for i in 1..=n {
                let t = ladder.temperature_at_epoch(i).unwrap();
                let phi = ladder.phi_at_epoch(i).unwrap();
                if !(1..=t_max).contains(&t)
                    || t > prev_t
                    || phi < prev_phi
                    || phi < 1.0 / f64::from(t_max)
                    || phi > 1.0
                {
                    return verdict(false, format!("ladder breach at T_max={t_max} n={n} i={i}"));
                }
                prev_t = t;
                prev_phi = phi;
                checked += 1;
            }
        }
    }
    let mut specs: Vec<PsiSpec> = vec![
        PsiSpec::new(PsiSchedule::CappedRamp { denominator: 150.0, cutover: 150 }, 200).unwrap(),
        PsiSpec::new(PsiSchedule::CappedRamp { denominator: 40.0, cutover: 20 }, 30).unwrap(),
    ];
    for n in (1..=500).step_by(13) {
        for k in (0..=n).step_by(11) {
            specs.push(PsiSpec::step(k, n));
        }
    }
    for s in &specs {
        let v: Vec<f64> = (1..=s.epochs).map(|i| s.psi(i).unwrap()).collect();
        if v.windows(2).any(|w| w[0] > w[1]) || v.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return verdict(false, format!("psi breach in {s:?}"));
        }
    }
    let midpoints = specs[0].psi(75).unwrap() == 0.5
        && specs[1].psi(20).unwrap() == 0.5
        && specs[1].psi(21).unwrap() == 1.0;
    verdict(
        midpoints,
        format!(
            "{checked} ladder epochs, {} psi schedules; psi(75)=0.5, psi(20)=0.5, psi(21)=1 exact",
            specs.len()
        ),
    )
}

fn hinge_dead_zone() -> Verdict {
    const ROWS: usize = 3;
    const COLS: usize = 4;
    let eval = |z_s: Vec<f64>, z_t: &[f64], phi: f64, m: f64| {
        let mut g = Graph::new();
        let s = g.param(Tensor::matrix(ROWS, COLS, z_s).unwrap());
        let t = Tensor::matrix(ROWS, COLS, z_t.to_vec()).unwrap();
        let l = continuation_kd_loss(&mut g, s, &t, phi, m).unwrap();
        g.backward(l).unwrap();
        (g.value(l).item(), g.grad(s).to_vec())
    };
    let place = |z_t: &[f64], dirs: &[f64], phi: f64, radii: &[f64]| {
        let mut out = Vec::with_capacity(ROWS * COLS);
        for r in 0..ROWS {
            let d = &dirs[r * COLS..(r + 1) * COLS];
            let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            for c in 0..COLS {
                out.push(phi * z_t[r * COLS + c] + radii[r] * d[c] / norm);
            }
        }
        out
    };
    let strategy = (
        prop::collection::vec(-5.0..5.0f64, ROWS * COLS),
        prop::collection::vec(prop_oneof![-1.0..-0.1f64, 0.1..1.0f64], ROWS * COLS),
        0.01..=1.0f64,
        0.01..10.0f64,
        prop::collection::vec(0.0..0.999f64, ROWS),
    );
    let mut runner = TestRunner::new(PtConfig {
        cases: 1000,
        failure_persistence: None,
        ..PtConfig::default()
    });
    let result = runner.run(&strategy, |(z_t, dirs, phi, m, frac)| {
        let radius = (m * phi).sqrt();
        let inside: Vec<f64> = frac.iter().map(|f| f * radius).collect();
        let (loss, grad) = eval(place(&z_t, &dirs, phi, &inside), &z_t, phi, m);
        prop_assert_eq!(loss, 0.0);
        prop_assert!(grad.iter().all(|&g| g == 0.0));
        let outside = vec![radius * 1.01; ROWS];
        let (loss, _) = eval(place(&z_t, &dirs, phi, &outside), &z_t, phi, m);
        prop_assert!(loss > 0.0);
        Ok(())
    });
    match result {
        Ok(()) => verdict(true, "1000 random trials, 0 failures"),
        Err(e) => verdict(false, format!("counterexample: {e}")),
    }
}

fn pooled(a: MeanStd, b: MeanStd) -> f64 {
    let (sa, sb) = (a.std.unwrap_or(0.0), b.std.unwrap_or(0.0));
    ((sa * sa + sb * sb) / 2.0).sqrt()
}

fn agg(s: &SweepOutcome, m: Method) -> &contkd::sweep::Aggregate {
    s.aggregate(m).expect("method in sweep")
}

fn noise_robustness(root: &Path) -> Verdict {
    let s = execute_sweep(&noisy_sine(), &[Method::Vanilla, Method::Continuation], &SEEDS, 1, root)
        .expect("sweep runs");
    if s.failed() > 0 {
        return verdict(false, format!("{} runs failed", s.failed()));
    }
    let (v, c) = (agg(&s, Method::Vanilla), agg(&s, Method::Continuation));
    let (vm, cm) = (v.mse_to_clean.unwrap(), c.mse_to_clean.unwrap());
    let (vh, ch) = (v.highfreq_energy.unwrap(), c.highfreq_energy.unwrap());
    let mse_ok = vm.mean - cm.mean > pooled(vm, cm);
    let hf_ok = vh.mean - ch.mean > pooled(vh, ch);
    verdict(
        mse_ok && hf_ok,
        format!(
            "5 seeds; mse_to_clean continuation {:.5} vs vanilla {:.5} (gap {:.5}, pooled sd {:.5}); \
             highfreq_energy {:.6} vs {:.6} (gap {:.6}, pooled sd {:.6})",
            cm.mean,
            vm.mean,
            vm.mean - cm.mean,
            pooled(vm, cm),
            ch.mean,
            vh.mean,
            vh.mean - ch.mean,
            pooled(vh, ch)
        ),
    )
}

fn capacity_gap_ordering(root: &Path) -> Verdict {
    let s = execute_sweep(&capacity_gap(), &Method::ALL, &SEEDS, 1, root).expect("sweep runs");
    if s.failed() > 0 {
        return verdict(false, format!("{} runs failed", s.failed()));
    }
    let m = |k| agg(&s, k).best_metric.unwrap();
    let (sc, va, an, co) = (
        m(Method::Scratch),
        m(Method::Vanilla),
        m(Method::Annealing),
        m(Method::Continuation),
    );
    let hard = co.mean >= va.mean;
    let soft = co.mean >= an.mean - pooled(co, an)
        && an.mean >= va.mean - pooled(an, va)
        && (va.mean - sc.mean).abs() <= pooled(va, sc);
    let csv = std::fs::read_to_string(s.dir.join("sweep.csv")).unwrap_or_default();
    let documented = csv.lines().filter(|l| l.starts_with("aggregate,")).count() == 5;
    let show = |x: MeanStd| format!("{:.4}±{:.4}", x.mean, x.std.unwrap_or(0.0));
    verdict(
        hard && soft && documented,
        format!(
            "5 seeds; continuation {} annealing {} takd {} vanilla {} scratch {}",
            show(co),
            show(an),
            show(m(Method::Takd)),
            show(va),
            show(sc)
        ),
    )
}

fn ablation_harness(root: &Path) -> Verdict {
    let mut base = two_class();
    base.method.name = "continuation".into();
    base.schedule.epochs = 12;
    base.schedule.psi_denominator = 12.0;
    base.schedule.psi_cutover = 12;
    let out = execute_ablation(&base, &root.join("ablate")).expect("ablation runs");
    let plain = execute(&base, &root.join("plain")).expect("plain run");
    let mut ok = out.arms.len() == 4;
    for (arm, o) in &out.arms {
        let snap = RunConfig::load(&o.dir.join("config.toml")).expect("snapshot parses");
        let m = &snap.method;
        let flags = (m.freeze_psi, m.freeze_phi_teacher, m.freeze_phi_margin);
        let expected = match arm {
            Arm::A => (None, Some(1.0), Some(1.0)),
            Arm::B => (Some(0.5), None, Some(1.0)),
            Arm::C => (Some(0.5), Some(1.0), None),
            Arm::D => (None, None, None),
        };
        ok &= flags == expected;
        let rows = &o.record.rows;
        let constant = |f: &dyn Fn(&contkd_core::EpochRow) -> Option<f64>| {
            rows.iter().all(|r| f(r) == f(&rows[0]))
        };
        let (psi_c, teacher_c, margin_c) = (
            constant(&|r| r.psi),
            constant(&|r| r.phi),
            constant(&|r| r.phi_margin),
        );
        ok &= match arm {
            Arm::A => !psi_c && teacher_c && margin_c,
            Arm::B => psi_c && !teacher_c && margin_c,
            Arm::C => psi_c && teacher_c && !margin_c,
            Arm::D => !psi_c && !teacher_c && !margin_c,
        };
    }
    let table = std::fs::read_to_string(out.dir.join("ablation.csv")).unwrap_or_default();
    let table_rows = table.lines().count().saturating_sub(1);
    let d_dir = &out.arms[3].1.dir;
    let byte_match = std::fs::read(d_dir.join("metrics.csv")).unwrap()
        == std::fs::read(plain.dir.join("metrics.csv")).unwrap();
    verdict(
        ok && table_rows == 4 && byte_match,
        format!("freeze flags exact, one dynamic factor per arm, {table_rows} table rows, arm D metrics byte-match plain train: {byte_match}"),
    )
}

fn determinism_and_persistence(root: &Path) -> Verdict {
    let mut ok = true;
    let mut files = 0;
    for (name, mut cfg) in [("mixture", two_class()), ("sine", noisy_sine())] {
        if name == "sine" {
            cfg.data.n_samples = 400;
            cfg.model.student_hidden = vec![16];
            cfg.schedule.epochs = 10;
            cfg.schedule.psi_denominator = 20.0;
            cfg.schedule.psi_cutover = 10;
        }
        let a = execute(&cfg, &root.join("first")).expect("run");
        let b = execute(&cfg, &root.join("second")).expect("rerun");
        for f in ["metrics.csv", "best.ckpt", "final.ckpt", "dataset.bin"] {
            ok &= std::fs::read(a.dir.join(f)).unwrap() == std::fs::read(b.dir.join(f)).unwrap();
        }
        let snap = RunConfig::load(&a.dir.join("config.toml")).expect("snapshot");
        let c = execute(&snap, &root.join("snapshot")).expect("snapshot rerun");
        ok &= std::fs::read(a.dir.join("metrics.csv")).unwrap()
            == std::fs::read(c.dir.join("metrics.csv")).unwrap();
        for f in ["best.ckpt", "final.ckpt"] {
            let bytes = std::fs::read(a.dir.join(f)).unwrap();
            let net = decode_checkpoint(&bytes).expect("decodes");
            ok &= encode_checkpoint(&net) == bytes;
            let orig = if f == "best.ckpt" {
                &a.record.best_checkpoint
            } else {
                &a.record.final_network
            };
            ok &= net
                .flat_params()
                .iter()
                .zip(orig.flat_params())
                .all(|(x, y)| x.to_bits() == y.to_bits());
            files += 1;
        }
        let bytes = std::fs::read(a.dir.join("dataset.bin")).unwrap();
        let ds = decode_dataset(&bytes).expect("decodes");
        ok &= encode_dataset(&ds) == bytes;
        files += 1;
    }
    verdict(
        ok,
        format!("reruns and snapshot reruns byte-identical; {files} checkpoint/dataset files round-trip bit-exactly"),
    )
}

type Check<'a> = Box<dyn FnOnce() -> Verdict + 'a>;

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let root = tmp.path();
    let criteria: Vec<(&str, Duration, Check)> = vec![
        ("gradient correctness", Duration::from_secs(60), Box::new(gradient_check)),
        ("annealing special case", Duration::from_secs(120), Box::new(|| annealing_special_case(&root.join("c2")))),
        ("schedule invariants", Duration::from_secs(30), Box::new(schedule_invariants)),
        ("hinge dead zone", Duration::from_secs(30), Box::new(hinge_dead_zone)),
        ("noise robustness", Duration::from_secs(600), Box::new(|| noise_robustness(&root.join("c5")))),
        ("capacity-gap ordering", Duration::from_secs(900), Box::new(|| capacity_gap_ordering(&root.join("c6")))),
        ("ablation harness", Duration::from_secs(300), Box::new(|| ablation_harness(&root.join("c7")))),
        ("determinism and persistence", Duration::from_secs(300), Box::new(|| determinism_and_persistence(&root.join("c8")))),
    ];
    let mut all = true;
    for (i, (name, limit, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let v = check();
        let took = start.elapsed();
        let pass = v.pass && took <= limit;
        all &= pass;
        println!(
            "criterion {} {name}: {} [{:.1}s, limit {}s] {}",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            limit.as_secs(),
            v.detail
        );
    }
    if !all {
        std::process::exit(1);
    }
}
