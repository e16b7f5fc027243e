//! Monte Carlo estimate over sampled configurations.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::graph::{ensure_augmented, CausalGraph};
use crate::sample::Sample;

use super::engine::{Engine, Runtime};
use super::exact::{target_delta, Walker};
use super::{EdgeAttribution, FlowError, Method};

const CHUNK: usize = 256;

/// Running mean and sum of squared deviations per edge.
#[derive(Clone)]
struct Moments {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(len: usize) -> Self {
        Moments { n: 0.0, mean: vec![0.0; len], m2: vec![0.0; len] }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1.0;
        for ((xi, mean), m2) in x.iter().zip(&mut self.mean).zip(&mut self.m2) {
            let d = xi - *mean;
            *mean += d / self.n;
            *m2 += d * (xi - *mean);
        }
    }

    fn merge(&mut self, o: &Moments) {
        let n = self.n + o.n;
        for i in 0..self.mean.len() {
            let d = o.mean[i] - self.mean[i];
            self.mean[i] += d * o.n / n;
            self.m2[i] += o.m2[i] + d * d * self.n * o.n / n;
        }
        self.n = n;
    }
}

/// Averages credits over `n` sampled configurations. Sample `i` draws from
/// ChaCha8 seeded with `seed` on stream `i`, so results do not depend on the
/// thread count. Standard errors use the unbiased sample variance.
pub fn shapley_flow_mc(g: &CausalGraph, bg: &Sample, fg: &Sample, n: usize, seed: u64) -> Result<EdgeAttribution, FlowError> {
    if n == 0 {
        return Err(FlowError::NoSamples);
    }
    let g = ensure_augmented(g);
    let mut rt = Runtime::new();
    let engine = Engine::new(&g, bg, fg, &mut rt)?;
    let root = g.super_source().expect("augmented");
    let len = g.edges().len();

    let chunks: Vec<Result<Moments, FlowError>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map_init(Runtime::new, |rt, c| {
            let mut m = Moments::new(len);
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                let mut w = Walker::new(&engine, rt, Some(rng));
                w.visit(root, 1.0)?;
                m.push(&w.credit);
            }
            Ok(m)
        })
        .collect();

    let mut total = Moments::new(len);
    for c in chunks {
        total.merge(&c?);
    }
    let stderr: Vec<f64> = if n > 1 {
        total.m2.iter().map(|m2| (m2 / (total.n - 1.0)).max(0.0).sqrt() / total.n.sqrt()).collect()
    } else {
        vec![0.0; len]
    };

    let mut attr = EdgeAttribution::from_vec(&g, &total.mean, Method::MonteCarlo, target_delta(&engine));
    attr.sample_count = Some(n);
    attr.seed = Some(seed);
    attr.stderr = Some(EdgeAttribution::from_vec(&g, &stderr, Method::MonteCarlo, 0.0).credit);
    Ok(attr)
}
