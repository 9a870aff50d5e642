mod config;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spikefloat::analysis::{Experiment, MetricsReport, SweepResult};
use spikefloat::float::{format_hex, parse_operand, Float32Fields, MANTISSA_WIDTH};
use spikefloat::fp_mul::{Component, MultiplierCircuit, ProductResult};
use spikefloat::gates::lines_from_u64;
use spikefloat::oracle::{ieee_mul_truncate, OracleResult};
use spikefloat::seed::derive_seed;

use config::{parse_neuron_override, ModeArg, RunConfig};

const EXIT_USAGE: u8 = 1;
const EXIT_MISMATCH: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "spikefloat", version, about = "Floating-point multiplication on simulated spiking neurons")]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// Flat key = value settings file; flags override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    /// Mantissa width in bits (0..=23)
    #[arg(long, global = true)]
    width: Option<usize>,
    /// Neurons per ensemble: `component=count`, or a bare count for all components
    #[arg(long, global = true, value_parser = parse_neuron_override)]
    neurons: Vec<(Option<Component>, usize)>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[arg(long, global = true)]
    settle_ms: Option<f64>,
    #[arg(long, global = true)]
    readout_ms: Option<f64>,
    #[arg(long, global = true)]
    dt_ms: Option<f64>,
    #[arg(long, global = true)]
    probe_ms: Option<f64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Multiply two operands (0x-prefixed 8-digit hex patterns or decimals)
    Mul {
        #[arg(allow_hyphen_values = true)]
        a: String,
        #[arg(allow_hyphen_values = true)]
        b: String,
    },
    /// Compare the circuit against the reference on many inputs
    Verify {
        /// Every mantissa and sign combination (width <= 4)
        #[arg(long)]
        exhaustive: bool,
    },
    /// Measure accuracy and bit errors of one component across neuron counts
    Sweep {
        #[arg(long)]
        component: Component,
        #[arg(long, value_delimiter = ',', default_value = "100,200,300,400,500,600,700,800")]
        counts: Vec<usize>,
        /// Operand pairs per built instance
        #[arg(long)]
        inputs: Option<usize>,
    },
    /// Print the effective settings in file form (or write them to --out)
    Config,
}

impl CommonArgs {
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if self.width.is_some() {
            cfg.width = self.width;
        }
        for &(component, n) in &self.neurons {
            match component {
                Some(c) => cfg.set_neurons(c, n),
                None => Component::ALL.into_iter().for_each(|c| cfg.set_neurons(c, n)),
            }
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if self.trials.is_some() {
            cfg.trials = self.trials;
        }
        let timing = [
            (self.settle_ms, &mut cfg.settle_ms),
            (self.readout_ms, &mut cfg.readout_ms),
            (self.dt_ms, &mut cfg.dt_ms),
            (self.probe_ms, &mut cfg.probe_ms),
        ];
        for (flag, slot) in timing {
            if let Some(v) = flag {
                *slot = v;
            }
        }
        if self.out.is_some() {
            cfg.out = self.out.clone();
        }
        cfg.sim().validate().context("invalid timing settings")?;
        if let Some(w) = cfg.width {
            if w > MANTISSA_WIDTH {
                bail!("width {w} is outside 0..={MANTISSA_WIDTH}");
            }
        }
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let cfg = cli.common.resolve()?;
    // `config` writes only where explicitly told, never to a path read from the file.
    let config_out = cli.common.out.clone();
    match cli.command {
        Command::Mul { a, b } => cmd_mul(&a, &b, &cfg),
        Command::Verify { exhaustive } => cmd_verify(&cfg, exhaustive),
        Command::Sweep { component, counts, inputs } => cmd_sweep(&cfg, component, &counts, inputs),
        Command::Config => {
            let text = cfg.to_text();
            match &config_out {
                Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{text}"),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn operand(text: &str, width: usize) -> anyhow::Result<Float32Fields> {
    let f = parse_operand(text)?;
    f.ensure_normal().with_context(|| format!("operand {text}"))?;
    Ok(f.truncate_to_width(width)?)
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "MATCH"
    } else {
        "MISMATCH"
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

/// Scores each unit's output lines in `r` against the reference.
fn component_metrics(r: &ProductResult, o: &OracleResult, cfg: &RunConfig, width: usize) -> anyhow::Result<Vec<MetricsReport>> {
    let budget = cfg.budget();
    let seeds = vec![cfg.seed];
    let bits = |v: u64, n: usize| lines_from_u64(v, n).iter().map(|l| l.bit()).collect::<Vec<_>>();
    let mut exp_lines = r.exponent_sum.sum.clone();
    exp_lines.push(r.exponent_sum.carry);
    let mut exp_ref = bits(o.exponent_sum.into(), 8);
    exp_ref.push(o.exponent_carry);
    let rows = [
        (Component::ExponentAdder, exp_lines, exp_ref),
        (Component::BiasSubtractor, r.exponent_out.clone(), bits(o.fields.exponent.into(), 8)),
        (
            Component::MantissaMultiplier,
            r.raw_product.clone(),
            bits(o.raw_product, 2 * (width + 1)),
        ),
        (Component::SignOfUf, vec![r.sign], vec![o.fields.sign]),
    ];
    rows.into_iter()
        .map(|(c, lines, reference)| {
            Ok(MetricsReport::from_lines(c, budget.get(c), seeds.clone(), &lines, &reference)?)
        })
        .collect()
}

fn cmd_mul(a: &str, b: &str, cfg: &RunConfig) -> anyhow::Result<ExitCode> {
    let width = cfg.width.unwrap_or(MANTISSA_WIDTH);
    let x = operand(a, width)?;
    let y = operand(b, width)?;
    let circuit = MultiplierCircuit::build(cfg.circuit(width))?;
    let r = circuit.multiply(&x, &y, cfg.seed)?;
    let o = ieee_mul_truncate(&x, &y)?;

    let f = r.fields;
    println!("a         {}  {}", format_hex(x.to_bits()), x.value());
    println!("b         {}  {}", format_hex(y.to_bits()), y.value());
    println!("result    {}  {}", format_hex(f.to_bits()), f.value());
    println!("fields    {f}");
    println!("norm_bit  {}", u8::from(r.normalization_bit));
    println!("of_uf     {} (exponent adder carry)", u8::from(r.of_uf_flag));
    println!("overflow  {}", yes_no(o.true_overflow));
    println!("underflow {}", yes_no(o.true_underflow));
    println!("oracle    {}  {}", format_hex(o.fields.to_bits()), o.fields.value());
    let checks = [
        ("sign", f.sign == o.fields.sign),
        ("exponent", f.exponent == o.fields.exponent),
        ("mantissa", f.mantissa == o.fields.mantissa),
        ("norm_bit", r.normalization_bit == o.norm_bit),
        ("of_uf", r.of_uf_flag == o.carry_flag),
    ];
    for (name, ok) in checks {
        println!("  {name:<9} {}", verdict(ok));
    }
    println!("component            neurons  mae     accuracy  bit_errors");
    for m in component_metrics(&r, &o, cfg, width)? {
        println!(
            "{:<20} {:>7}  {:.4}  {:>7.2}%  {}/{}",
            m.component.name(),
            m.neurons_per_ensemble,
            m.mae,
            m.accuracy,
            m.bit_errors,
            m.total_bits
        );
    }
    let all = checks.iter().all(|(_, ok)| *ok);
    println!("{}", verdict(all));
    Ok(if all { ExitCode::SUCCESS } else { ExitCode::from(EXIT_MISMATCH) })
}

/// Bits in which the circuit's answer differs from the reference.
fn differing_bits(r: &ProductResult, o: &OracleResult) -> u32 {
    let f = &r.fields;
    u32::from(f.sign != o.fields.sign)
        + (f.exponent ^ o.fields.exponent).count_ones()
        + (f.mantissa ^ o.fields.mantissa).count_ones()
        + u32::from(r.normalization_bit != o.norm_bit)
        + u32::from(r.of_uf_flag != o.carry_flag)
}

fn random_exponents(rng: &mut ChaCha8Rng) -> (u8, u8) {
    (rng.random_range(1..=254), rng.random_range(1..=254))
}

fn cmd_verify(cfg: &RunConfig, exhaustive: bool) -> anyhow::Result<ExitCode> {
    let width = cfg.width.unwrap_or(MANTISSA_WIDTH);
    if exhaustive && width > 4 {
        bail!("--exhaustive needs --width 4 or less (got {width})");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0x5EED));
    let mut pairs = Vec::new();
    if exhaustive {
        let per_combo = cfg.trials.unwrap_or(1);
        for m1 in 0..1u32 << width {
            for m2 in 0..1u32 << width {
                for signs in 0..4u8 {
                    for _ in 0..per_combo {
                        let (e1, e2) = random_exponents(&mut rng);
                        pairs.push((
                            Float32Fields::new(signs & 1 == 1, e1, m1, width)?,
                            Float32Fields::new(signs & 2 == 2, e2, m2, width)?,
                        ));
                    }
                }
            }
        }
    } else {
        for _ in 0..cfg.trials.unwrap_or(100) {
            let (e1, e2) = random_exponents(&mut rng);
            let mut m = || if width == 0 { 0 } else { rng.random_range(0..1u32 << width) };
            let (m1, m2) = (m(), m());
            pairs.push((
                Float32Fields::new(rng.random(), e1, m1, width)?,
                Float32Fields::new(rng.random(), e2, m2, width)?,
            ));
        }
    }

    let circuit = MultiplierCircuit::build(cfg.circuit(width))?;
    let mut mismatches = Vec::new();
    let mut bit_errors = 0u64;
    let bits_per_pair = (1 + 8 + width + 2) as u64;
    for (k, (x, y)) in pairs.iter().enumerate() {
        let r = circuit.multiply(x, y, derive_seed(cfg.seed, k as u64))?;
        let o = ieee_mul_truncate(x, y)?;
        let d = differing_bits(&r, &o);
        if d > 0 {
            bit_errors += u64::from(d);
            mismatches.push((*x, *y, r.fields, o.fields, d));
        }
    }

    let mode = match cfg.mode {
        ModeArg::Rate => "rate",
        ModeArg::Spiking => "spiking",
    };
    println!(
        "verified {} pairs (width {width}, {mode} mode, seed {}): {} mismatches, {bit_errors} bit errors over {} bits",
        pairs.len(),
        cfg.seed,
        mismatches.len(),
        bits_per_pair * pairs.len() as u64
    );
    for (x, y, got, want, d) in &mismatches {
        println!(
            "  {} x {} -> {} expected {} ({d} bits)",
            format_hex(x.to_bits()),
            format_hex(y.to_bits()),
            format_hex(got.to_bits()),
            format_hex(want.to_bits())
        );
    }
    Ok(if mismatches.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(EXIT_MISMATCH) })
}

fn print_trend(out: &mut dyn Write, result: &SweepResult) -> io::Result<()> {
    writeln!(out, "neurons  accuracy (mean ± se)  mae     bit_errors")?;
    for p in &result.points {
        writeln!(
            out,
            "{:>7}  {:>8.3} ± {:<9.3}  {:.4}  {}/{}",
            p.neurons,
            p.mean_accuracy(),
            p.accuracy_std_error(),
            p.report.mae,
            p.report.bit_errors,
            p.report.total_bits
        )?;
    }
    if let Some(k) = result.knee(1.0) {
        writeln!(out, "knee: {k} neurons (first count within 1 point of the best mean accuracy)")?;
    }
    Ok(())
}

fn cmd_sweep(cfg: &RunConfig, component: Component, counts: &[usize], inputs: Option<usize>) -> anyhow::Result<ExitCode> {
    let mut counts = counts.to_vec();
    counts.sort_unstable();
    counts.dedup();
    let experiment = Experiment {
        component,
        mantissa_width: cfg.width.unwrap_or(6),
        mode: cfg.mode.into(),
        sim: cfg.sim(),
        nef: cfg.nef(),
        inputs_per_trial: inputs.unwrap_or(cfg.inputs_per_trial),
    };
    let result = experiment.sweep(&counts, cfg.trials.unwrap_or(5), cfg.seed)?;
    match &cfg.out {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            result.write_csv(BufWriter::new(file))?;
            print_trend(&mut io::stdout(), &result)?;
            println!("wrote {}", path.display());
        }
        None => {
            result.write_csv(io::stdout())?;
            print_trend(&mut io::stderr(), &result)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
