use std::sync::OnceLock;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spikefloat::float::Float32Fields;
use spikefloat::fp_mul::{CircuitConfig, MultiplierCircuit, NeuronBudget};
use spikefloat::nef::Mode;
use spikefloat::oracle::ieee_mul_truncate;

fn rate_circuit(width: usize) -> MultiplierCircuit {
    let mut cfg = CircuitConfig::new(width, Mode::Rate);
    cfg.budget = NeuronBudget::uniform(100);
    cfg.seed = width as u64;
    MultiplierCircuit::build(cfg).unwrap()
}

fn six_bit() -> &'static MultiplierCircuit {
    static C: OnceLock<MultiplierCircuit> = OnceLock::new();
    C.get_or_init(|| rate_circuit(6))
}

#[test]
fn rate_mode_matches_oracle_exhaustively_for_small_widths() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for w in 0..=4usize {
        let circuit = rate_circuit(w);
        for m1 in 0..1u32 << w {
            for m2 in 0..1u32 << w {
                for signs in 0..4u8 {
                    for _ in 0..3 {
                        let x = Float32Fields::new(signs & 1 == 1, rng.random_range(1..=254), m1, w).unwrap();
                        let y = Float32Fields::new(signs & 2 == 2, rng.random_range(1..=254), m2, w).unwrap();
                        let r = circuit.multiply(&x, &y, 0).unwrap();
                        let o = ieee_mul_truncate(&x, &y).unwrap();
                        assert_eq!(r.fields, o.fields, "w={w} {x} * {y}");
                        assert_eq!(r.normalization_bit, o.norm_bit);
                        assert_eq!(r.of_uf_flag, o.carry_flag);
                        assert_eq!(r.raw_product_value(), o.raw_product);
                    }
                }
            }
        }
    }
}

#[test]
fn normalization_increments_the_exponent() {
    let c = rate_circuit(3);
    // 1.5 * 1.5 = 2.25 needs the shift; 1.25 * 1.25 = 1.5625 does not.
    let f = |v: f32| Float32Fields::from_f32(v).truncate_to_width(3).unwrap();
    let r = c.multiply(&f(1.5), &f(1.5), 0).unwrap();
    assert!(r.normalization_bit);
    assert_eq!(r.fields.exponent, 128);
    assert_eq!(r.fields.mantissa, 0b001);
    let r = c.multiply(&f(1.25), &f(1.25), 0).unwrap();
    assert!(!r.normalization_bit);
    assert_eq!(r.fields.exponent, 127);
    assert_eq!(r.fields.mantissa, 0b100);
}

#[test]
fn overflow_flag_follows_the_exponent_carry() {
    let c = rate_circuit(23);
    let f = Float32Fields::from_f32;
    // Carry out of the exponent sum with an in-range result: the flag fires anyway.
    let r = c.multiply(&f(8.0), &f(8.0), 0).unwrap();
    let o = ieee_mul_truncate(&f(8.0), &f(8.0)).unwrap();
    assert_eq!(r.fields.to_bits(), 64.0f32.to_bits());
    assert!(r.of_uf_flag && r.exponent_carry);
    assert!(!o.true_overflow && !o.true_underflow);
    // Genuine overflow.
    let r = c.multiply(&f(2.0e38), &f(4.0), 0).unwrap();
    assert!(r.of_uf_flag);
    // Genuine underflow without a carry: the flag stays clear.
    let x = f(1e-30);
    let y = f(1e-20);
    let r = c.multiply(&x, &y, 0).unwrap();
    assert!(!r.of_uf_flag);
    assert!(ieee_mul_truncate(&x, &y).unwrap().true_underflow);
}

#[test]
fn spiking_runs_are_reproducible() {
    let mut cfg = CircuitConfig::new(4, Mode::Spiking);
    cfg.budget = NeuronBudget::uniform(60);
    cfg.seed = 3;
    let c = MultiplierCircuit::build(cfg).unwrap();
    let x = Float32Fields::new(false, 130, 0b1011, 4).unwrap();
    let y = Float32Fields::new(true, 120, 0b0110, 4).unwrap();
    assert_eq!(c.multiply(&x, &y, 8).unwrap(), c.multiply(&x, &y, 8).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rate_mode_is_commutative_and_exact(
        s1: bool, s2: bool, e1 in 1u8..=254, e2 in 1u8..=254, m1 in 0u32..64, m2 in 0u32..64,
    ) {
        let x = Float32Fields::new(s1, e1, m1, 6).unwrap();
        let y = Float32Fields::new(s2, e2, m2, 6).unwrap();
        let xy = six_bit().multiply(&x, &y, 0).unwrap();
        let yx = six_bit().multiply(&y, &x, 0).unwrap();
        prop_assert_eq!(xy.fields, yx.fields);
        prop_assert_eq!(xy.fields, ieee_mul_truncate(&x, &y).unwrap().fields);
    }
}
