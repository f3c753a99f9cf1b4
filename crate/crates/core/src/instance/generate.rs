use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{build_lattice_rays, Direction, Labeling, Pairwise, TomographyInstance};
use crate::error::{Error, Result};

pub const GENERATOR_NAME: &str = "box-blur-threshold";

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub k: usize,
    pub directions: Vec<Direction>,
    /// Box blur radius applied to the noise before thresholding.
    pub smoothing: usize,
}

impl GeneratorConfig {
    pub fn new(seed: u64, width: usize, height: usize, k: usize, directions: Vec<Direction>) -> Self {
        GeneratorConfig {
            seed,
            width,
            height,
            k,
            directions,
            smoothing: 1,
        }
    }
}

/// Provenance recorded alongside generated instances.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorMeta {
    pub generator: String,
    pub seed: u64,
    pub smoothing: usize,
}

/// Blob-like random image plus the tomography instance measuring it.
///
/// Uniform noise is box-blurred with radius `smoothing` and split into `k`
/// equal-mass bins by rank. Costs are zero unaries and `|a - b|` on grid
/// edges; ray targets are the image's projections.
pub fn generate_random_instance(config: &GeneratorConfig) -> Result<(TomographyInstance, Labeling)> {
    let GeneratorConfig {
        seed,
        width: w,
        height: h,
        k,
        smoothing,
        ..
    } = *config;
    if k < 2 {
        return Err(Error::validation("k", format!("label count must be >= 2, got {k}")));
    }
    if w == 0 || h == 0 {
        return Err(Error::validation("width", "grid must be non-empty"));
    }
    if config.directions.is_empty() {
        return Err(Error::InvalidArgument("direction set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..w * h).map(|_| rng.gen::<f64>()).collect();

    let r = smoothing as isize;
    let mut blurred = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = 0.0;
            let mut cnt = 0usize;
            for yy in (y - r).max(0)..=(y + r).min(h as isize - 1) {
                for xx in (x - r).max(0)..=(x + r).min(w as isize - 1) {
                    acc += noise[yy as usize * w + xx as usize];
                    cnt += 1;
                }
            }
            blurred[y as usize * w + x as usize] = acc / cnt as f64;
        }
    }

    let n = w * h;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| blurred[a].total_cmp(&blurred[b]).then(a.cmp(&b)));
    let mut image = vec![0usize; n];
    for (rank, &u) in order.iter().enumerate() {
        image[u] = rank * k / n;
    }
    let truth = Labeling(image);

    let rays = build_lattice_rays(w, h, &config.directions);
    let mut inst = TomographyInstance::new(w, h, k, None, Pairwise::AbsDiff(1.0), rays)?.with_meta(GeneratorMeta {
        generator: GENERATOR_NAME.to_string(),
        seed,
        smoothing,
    });
    inst.set_targets_from(&truth);
    Ok((inst, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hv() -> Vec<Direction> {
        vec![Direction::Horizontal, Direction::Vertical]
    }

    #[test]
    fn deterministic_in_seed() {
        let cfg = GeneratorConfig::new(7, 6, 5, 3, hv());
        let (a, ta) = generate_random_instance(&cfg).unwrap();
        let (b, tb) = generate_random_instance(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let (c, _) = generate_random_instance(&GeneratorConfig::new(8, 6, 5, 3, hv())).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn ground_truth_is_feasible() {
        for seed in 0..20 {
            let cfg = GeneratorConfig::new(seed, 7, 4, 4, vec![Direction::Horizontal, Direction::DiagUp]);
            let (inst, truth) = generate_random_instance(&cfg).unwrap();
            assert!(inst.check_feasibility(&truth).iter().all(|&r| r == 0));
        }
    }

    #[test]
    fn three_labels_present_on_small_grid() {
        let (inst, truth) = generate_random_instance(&GeneratorConfig::new(1, 8, 8, 3, hv())).unwrap();
        let mut hist = [0usize; 3];
        truth.iter().for_each(|&x| hist[x] += 1);
        assert!(hist.iter().all(|&c| c > 0), "{hist:?}");
        assert_eq!(inst.pairwise(), &Pairwise::AbsDiff(1.0));
        assert!(inst.unary_costs().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn rejects_single_label() {
        assert!(generate_random_instance(&GeneratorConfig::new(0, 3, 3, 1, hv())).is_err());
    }
}
