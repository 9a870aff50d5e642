//! Acceptance criteria, one line of output each. Pass criterion names or
//! numbers (e.g. `ac4`) as arguments to run a subset.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spikefloat::analysis::{sweep_neurons, Experiment};
use spikefloat::float::Float32Fields;
use spikefloat::fp_mul::{CircuitConfig, Component, MultiplierCircuit, ProductResult};
use spikefloat::gates::{AndGate, BitLine, FullAdder, GateConfig, XorGate};
use spikefloat::nef::{
    build_ensemble, grid_eval_points, lif_rate, regularized_loss, run_network, solve_decoders, DecodedConnection,
    LifParameters, LifPopulation, Mode, Network, SimConfig, TuningRanges,
};
use spikefloat::oracle::{ieee_mul_truncate, OracleResult};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Exact product of two binary32 values, truncated to binary32. `None` if the
/// result is not a normal binary32 number.
fn host_round_toward_zero(x: f32, y: f32) -> Option<u32> {
    // 24-bit significands: the product fits in f64's 53 bits exactly.
    let bits = (f64::from(x) * f64::from(y)).to_bits();
    let exponent = ((bits >> 52) & 0x7FF) as i64 - 1023 + 127;
    if !(1..=254).contains(&exponent) {
        return None;
    }
    Some(((bits >> 63) << 31 | (exponent as u64) << 23 | ((bits >> 29) & 0x7F_FFFF)) as u32)
}

fn random_normal_bits(rng: &mut ChaCha8Rng) -> u32 {
    (rng.random::<u32>() & 0x807F_FFFF) | (rng.random_range(1u32..=254) << 23)
}

fn random_operand(rng: &mut ChaCha8Rng, width: usize) -> Float32Fields {
    Float32Fields::new(rng.random(), rng.random_range(1..=254), rng.random_range(0..1u32 << width), width).unwrap()
}

/// Output bits (sign, exponent, mantissa, norm bit, flag) that differ from the reference.
fn differing_bits(r: &ProductResult, o: &OracleResult) -> u32 {
    u32::from(r.fields.sign != o.fields.sign)
        + (r.fields.exponent ^ o.fields.exponent).count_ones()
        + (r.fields.mantissa ^ o.fields.mantissa).count_ones()
        + u32::from(r.normalization_bit != o.norm_bit)
        + u32::from(r.of_uf_flag != o.carry_flag)
}

fn ac1_oracle_fidelity() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut checked, mut mismatches, mut exact_checked) = (0, 0, 0);
    while checked < 10_000 {
        let (mut a, mut b) = (random_normal_bits(&mut rng), random_normal_bits(&mut rng));
        if checked % 2 == 1 {
            // Short significands so that the product is exactly representable.
            a &= !0xFFF;
            b &= !0xFFF;
        }
        let (x, y) = (f32::from_bits(a), f32::from_bits(b));
        let Some(expected) = host_round_toward_zero(x, y) else {
            continue;
        };
        checked += 1;
        let got = ieee_mul_truncate(&Float32Fields::from_bits(a), &Float32Fields::from_bits(b))
            .unwrap()
            .fields
            .to_bits();
        let exact = f64::from(x * y) == f64::from(x) * f64::from(y);
        if exact {
            exact_checked += 1;
        }
        if got != expected || (exact && got != (x * y).to_bits()) {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        mismatches == 0 && secs < 10.0,
        format!("{mismatches} mismatches over {checked} in-range pairs ({exact_checked} exact), {secs:.2}s"),
    )
}

fn ac2_rate_equivalence() -> Outcome {
    let start = Instant::now();
    let w = 3;
    let circuit = MultiplierCircuit::build(CircuitConfig::new(w, Mode::Rate)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let exponent_pairs: Vec<(u8, u8)> = (0..1000)
        .map(|_| (rng.random_range(1..=254), rng.random_range(1..=254)))
        .collect();
    let (mut total, mut mismatches) = (0u64, 0u64);
    for m1 in 0..1u32 << w {
        for m2 in 0..1u32 << w {
            for signs in 0..4u8 {
                for &(e1, e2) in &exponent_pairs {
                    let x = Float32Fields::new(signs & 1 == 1, e1, m1, w).unwrap();
                    let y = Float32Fields::new(signs & 2 == 2, e2, m2, w).unwrap();
                    let r = circuit.multiply(&x, &y, 0).unwrap();
                    let o = ieee_mul_truncate(&x, &y).unwrap();
                    total += 1;
                    if differing_bits(&r, &o) != 0 {
                        mismatches += 1;
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        mismatches == 0 && secs < 300.0,
        format!("{mismatches} mismatches over {total} products at W=3, {secs:.1}s"),
    )
}

fn ac3_gate_truth_tables() -> Outcome {
    let mut failures = Vec::new();
    let mut rows = 0;
    for (mode, n) in [(Mode::Rate, 100), (Mode::Spiking, 300)] {
        let cfg = GateConfig::new(n, mode);
        for seed in 0..10u64 {
            let and = AndGate::build(&cfg, seed).unwrap();
            let xor = XorGate::build(&cfg, seed).unwrap();
            let fa = FullAdder::build(&cfg, seed).unwrap();
            let c = BitLine::constant;
            for a in [false, true] {
                for b in [false, true] {
                    rows += 2;
                    if and.eval(c(a), c(b), seed).unwrap().bit() != (a && b) {
                        failures.push(format!("{mode} seed {seed} AND({a},{b})"));
                    }
                    if xor.eval(c(a), c(b), seed).unwrap().bit() != (a ^ b) {
                        failures.push(format!("{mode} seed {seed} XOR({a},{b})"));
                    }
                    for cin in [false, true] {
                        rows += 1;
                        let (s, co) = fa.eval(c(a), c(b), c(cin), seed).unwrap();
                        let total = u8::from(a) + u8::from(b) + u8::from(cin);
                        if s.bit() != (total & 1 == 1) || co.bit() != (total >= 2) {
                            failures.push(format!("{mode} seed {seed} FA({a},{b},{cin})"));
                        }
                    }
                }
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!("{}/{rows} rows correct (rate@100, spiking@300, 10 seeds) {}", rows - failures.len(), failures.join(" ")),
    )
}

fn ac4_spiking_fidelity() -> Outcome {
    let start = Instant::now();
    let w = 6;
    let mut cfg = CircuitConfig::new(w, Mode::Spiking);
    cfg.seed = 4;
    let circuit = MultiplierCircuit::build(cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut bad_bits = 0;
    for k in 0..50u64 {
        let (x, y) = (random_operand(&mut rng, w), random_operand(&mut rng, w));
        let r = circuit.multiply(&x, &y, k).unwrap();
        bad_bits += differing_bits(&r, &ieee_mul_truncate(&x, &y).unwrap());
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        bad_bits <= 1 && secs < 1800.0,
        format!("{bad_bits} erroneous bits over 50 pairs x {} bits at W=6, default budgets, {secs:.1}s", 1 + 8 + w + 2),
    )
}

fn ac5_low_neuron_degradation() -> Outcome {
    let mut e = Experiment::new(Component::MantissaMultiplier);
    e.mantissa_width = 23;
    e.inputs_per_trial = 1;
    let p = e.measure(150, 20, 5).unwrap();
    let rate = p.report.bit_error_rate();
    outcome(
        (0.005..=0.08).contains(&rate),
        format!(
            "{}/{} product bits wrong ({:.2}%) at 150 neurons, W=23, 20 trials; accepted band 0.5%..8%",
            p.report.bit_errors,
            p.report.total_bits,
            100.0 * rate
        ),
    )
}

fn ac6_sweep_trend() -> Outcome {
    let start = Instant::now();
    let counts: Vec<usize> = (1..=8).map(|k| 100 * k).collect();
    let sweep = sweep_neurons(Component::MantissaMultiplier, &counts, 5, 6).unwrap();
    let acc = |n: usize| sweep.point(n).unwrap().mean_accuracy();
    let (a100, a300, a800) = (acc(100), acc(300), acc(800));
    let curve: Vec<String> = counts.iter().map(|&n| format!("{n}:{:.2}", acc(n))).collect();
    outcome(
        a300 > a100 && a800 - a300 < a300 - a100,
        format!(
            "gain 100->300 {:.2} pts, 300->800 {:.2} pts; mean accuracy {} ({:.0}s)",
            a300 - a100,
            a800 - a300,
            curve.join(" "),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn ac7_exponent_path() -> Outcome {
    let mut parts = Vec::new();
    let mut errors = 0;
    for c in [Component::ExponentAdder, Component::BiasSubtractor] {
        let mut e = Experiment::new(c);
        e.inputs_per_trial = 20;
        let p = e.measure(150, 10, 7).unwrap();
        errors += p.report.bit_errors;
        parts.push(format!("{c} {}/{} bits wrong", p.report.bit_errors, p.report.total_bits));
    }
    outcome(errors == 0, format!("{} over 200 inputs each at 150 neurons", parts.join(", ")))
}

fn identity_rmse(n: usize, seed: u64) -> f64 {
    let e = build_ensemble(n, 1, 1.0, LifParameters::default(), seed, TuningRanges::default()).unwrap();
    let pts = grid_eval_points(1, -1.0, 1.0, 500).unwrap();
    let d = solve_decoders(&e, &pts, &pts, 0.1).unwrap();
    let err = &e.activity_matrix(&pts).unwrap() * d - &pts;
    (err.norm_squared() / 500.0).sqrt()
}

fn ac8_nef_core() -> Outcome {
    let mut notes = Vec::new();

    let e = build_ensemble(40, 1, 1.0, LifParameters::default(), 8, TuningRanges::default()).unwrap();
    let pts = grid_eval_points(1, -1.0, 1.0, 200).unwrap();
    let targets = pts.map(|x| x * x);
    let d = solve_decoders(&e, &pts, &targets, 0.1).unwrap();
    let base = regularized_loss(&e, &pts, &targets, &d, 0.1).unwrap();
    let optimal = (0..d.nrows()).all(|i| {
        [1e-3, -1e-3].iter().all(|delta| {
            let mut p = d.clone();
            p[(i, 0)] += delta;
            regularized_loss(&e, &pts, &targets, &p, 0.1).unwrap() >= base * (1.0 - 1e-12)
        })
    });
    notes.push(format!("optimality {}", if optimal { "ok" } else { "violated" }));

    let rmse = identity_rmse(100, 11);
    notes.push(format!("identity RMSE@100 {rmse:.4}"));
    let mean = |n: usize| (0..10).map(|s| identity_rmse(n, s)).sum::<f64>() / 10.0;
    let (small, large) = (mean(50), mean(500));
    notes.push(format!("RMSE@50 {small:.4} vs @500 {large:.4}"));

    let params = LifParameters::default();
    let mut worst = 0.0f64;
    for j in [1.2, 2.0, 5.0, 20.0] {
        let mut pop = LifPopulation::new(params, vec![0.0]);
        let mut spiked = Vec::new();
        let count: usize = (0..2000)
            .map(|_| {
                pop.step(&[j], &mut spiked);
                spiked.len()
            })
            .sum();
        let rate = lif_rate(j, &params);
        worst = worst.max((count as f64 / 2.0 - rate).abs() / rate);
    }
    notes.push(format!("spike/rate deviation {:.2}%", 100.0 * worst));

    let ens = build_ensemble(100, 1, 1.0, params, 3, TuningRanges::default()).unwrap();
    let conn = DecodedConnection::solve(&ens, &grid_eval_points(1, -1.0, 1.0, 500).unwrap(), 1, |x| vec![x[0]], 0.1, 0.005, "x")
        .unwrap();
    let record = || {
        let mut net = Network::new();
        let id = net.add_ensemble(&ens);
        let input = net.add_input(vec![0.4]);
        net.connect_input(input, id, None).unwrap();
        net.probe(id, &conn).unwrap();
        run_network(&net, &SimConfig::default().with_seed(9), Mode::Spiking).unwrap()
    };
    let deterministic = record() == record();
    notes.push(format!("determinism {}", if deterministic { "ok" } else { "violated" }));

    let tuning_ok = (0..ens.n_neurons()).all(|i| {
        let enc = ens.encoders()[(i, 0)];
        let xs = DMatrix::from_fn(101, 1, |p, _| enc * (-1.0 + p as f64 / 50.0));
        let a = ens.activity_matrix(&xs).unwrap();
        (1..101).all(|p| a[(p, i)] >= a[(p - 1, i)])
    });
    notes.push(format!("tuning monotone {}", if tuning_ok { "ok" } else { "violated" }));

    outcome(
        optimal && rmse < 0.02 && large <= small && worst <= 0.05 && deterministic && tuning_ok,
        notes.join(", "),
    )
}

fn ac9_full_width() -> Outcome {
    let start = Instant::now();
    let mut cfg = CircuitConfig::new(23, Mode::Spiking);
    cfg.seed = 9;
    let circuit = MultiplierCircuit::build(cfg).unwrap();
    let x = Float32Fields::from_f32(1.7853);
    let y = Float32Fields::from_f32(-3.0517);
    let r = circuit.multiply(&x, &y, 9).unwrap();
    let o = ieee_mul_truncate(&x, &y).unwrap();
    let bad = differing_bits(&r, &o);
    outcome(
        bad == 0,
        format!(
            "1.7853 x -3.0517 -> {:#010X}, reference {:#010X}, {bad} differing bits, {:.0}s",
            r.fields.to_bits(),
            o.fields.to_bits(),
            start.elapsed().as_secs_f64()
        ),
    )
}

type Criterion = (&'static str, &'static str, fn() -> Outcome);

const CRITERIA: [Criterion; 9] = [
    ("ac1", "oracle fidelity", ac1_oracle_fidelity),
    ("ac2", "rate-mode circuit equivalence", ac2_rate_equivalence),
    ("ac3", "gate truth tables", ac3_gate_truth_tables),
    ("ac4", "spiking multiplier fidelity", ac4_spiking_fidelity),
    ("ac5", "low-neuron degradation", ac5_low_neuron_degradation),
    ("ac6", "sweep trend", ac6_sweep_trend),
    ("ac7", "exponent path robustness", ac7_exponent_path),
    ("ac8", "nef core properties", ac8_nef_core),
    ("ac9", "full-width spiking multiplication", ac9_full_width),
];

fn main() -> ExitCode {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let selected: Vec<&Criterion> = CRITERIA
        .iter()
        .filter(|(id, name, _)| filters.is_empty() || filters.iter().any(|f| id.contains(f.as_str()) || name.contains(f.as_str())))
        .collect();
    let mut failed = 0;
    for (id, name, check) in &selected {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("{} {id} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {}/{} criteria passed", selected.len() - failed, selected.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
