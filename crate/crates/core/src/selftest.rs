//! Invariant checks bundled into the binary (`qwio-jpeg selftest`).

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dct::{self, alpha, Block8, QuantizedBlock8};
use crate::quant::PARAM_DIM;
use crate::qwio::{self, QwioConfig, SphereObjective};
use crate::rd;

/// Transform implementations under test; swapped out to inject faults.
#[derive(Clone, Copy)]
pub struct Hooks {
    pub dct: fn(&Block8) -> Block8,
    pub idct: fn(&Block8) -> Block8,
}

impl Default for Hooks {
    fn default() -> Self {
        Hooks { dct: dct::dct2, idct: dct::idct2 }
    }
}

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, worst: f64, tol: f64) -> Self {
        Check { name, passed: worst <= tol, detail: format!("max deviation {worst:.3e} (tol {tol:e})") }
    }
}

pub const CHECK_NAMES: [&str; 5] =
    ["dct_roundtrip", "dct_oracle", "dct_norm", "entropy_oracle", "amplitude_normalization"];

fn random_block(rng: &mut impl Rng) -> Block8 {
    let mut b = Block8::ZERO;
    for v in b.0.iter_mut().flatten() {
        *v = rng.random_range(-128.0..=127.0);
    }
    b
}

fn direct_dct(b: &Block8) -> Block8 {
    use std::f64::consts::PI;
    let mut out = Block8::ZERO;
    for u in 0..8 {
        for v in 0..8 {
            let mut s = 0.0;
            for x in 0..8 {
                for y in 0..8 {
                    s += b.0[x][y]
                        * (PI * (2 * x + 1) as f64 * u as f64 / 16.0).cos()
                        * (PI * (2 * y + 1) as f64 * v as f64 / 16.0).cos();
                }
            }
            out.0[u][v] = alpha(u) * alpha(v) * s;
        }
    }
    out
}

pub fn run(hooks: &Hooks) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e1f);
    let blocks: Vec<Block8> = (0..200).map(|_| random_block(&mut rng)).collect();

    let roundtrip = blocks.iter().map(|b| (hooks.idct)(&(hooks.dct)(b)).max_abs_diff(b)).fold(0.0, f64::max);
    let oracle = blocks.iter().take(50).map(|b| (hooks.dct)(b).max_abs_diff(&direct_dct(b))).fold(0.0, f64::max);
    let norm = blocks.iter().map(|b| ((hooks.dct)(b).frobenius_norm() - b.frobenius_norm()).abs()).fold(0.0, f64::max);

    let mut entropy_dev: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(1..5);
        let qb: Vec<QuantizedBlock8> = (0..n)
            .map(|_| {
                let mut z = [[0; 8]; 8];
                for v in z.iter_mut().flatten() {
                    *v = rng.random_range(-12..=12);
                }
                QuantizedBlock8(z)
            })
            .collect();
        let mut hist: HashMap<i32, usize> = HashMap::new();
        for v in qb.iter().flat_map(|b| b.iter()) {
            *hist.entry(v).or_default() += 1;
        }
        let total = (n * 64) as f64;
        let expected: f64 = hist.values().map(|&c| -(c as f64 / total) * (c as f64 / total).log2()).sum();
        let got = rd::symbol_entropy(&qb).unwrap_or(f64::NAN);
        entropy_dev = entropy_dev.max((got - expected).abs());
        if got.is_nan() {
            entropy_dev = f64::INFINITY;
        }
    }

    vec![
        Check::new(CHECK_NAMES[0], roundtrip, 1e-9),
        Check::new(CHECK_NAMES[1], oracle, 1e-10),
        Check::new(CHECK_NAMES[2], norm, 1e-9),
        Check::new(CHECK_NAMES[3], entropy_dev, 1e-12),
        amplitude_check(),
    ]
}

fn amplitude_check() -> Check {
    let cfg = QwioConfig { population_n: 16, seed: 3, ..QwioConfig::default() };
    let objective = SphereObjective { optimum: [1.5; PARAM_DIM] };
    let mut worst: f64 = 0.0;
    let mut step = || -> crate::Result<()> {
        let mut pop = qwio::init_population(&cfg)?;
        for _ in 0..10 {
            worst = worst.max((pop.total_probability() - 1.0).abs());
            qwio::evaluate_all(&mut pop, &objective)?;
            let before = pop.magnitudes();
            qwio::phase_reinforce(&mut pop, cfg.gamma, cfg.epsilon)?;
            for (a, b) in pop.magnitudes().iter().zip(&before) {
                worst = worst.max((a - b).abs());
            }
            qwio::mixing(&mut pop, cfg.kernel_bandwidth)?;
            worst = worst.max((pop.total_probability() - 1.0).abs());
            qwio::sample_next(&mut pop, &cfg)?;
        }
        Ok(())
    };
    if let Err(e) = step() {
        return Check { name: CHECK_NAMES[4], passed: false, detail: e.to_string() };
    }
    Check::new(CHECK_NAMES[4], worst, 1e-9)
}

/// 0 when every check passed, 3 otherwise.
pub fn exit_code(checks: &[Check]) -> i32 {
    if checks.iter().all(|c| c.passed) {
        0
    } else {
        3
    }
}

pub fn render(checks: &[Check]) -> String {
    checks.iter().map(|c| format!("{} {}: {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)).collect()
}
