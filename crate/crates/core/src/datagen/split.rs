use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::seed::{self, mix_seed};
use super::{PanelDataset, Role};
use crate::error::{Error, Result};
use crate::seqmodel::Arm;

const MAX_RESHUFFLES: u64 = 100;

/// Seeded uniform source/target split with both arms on both sides.
///
/// The source side gets `round(n * source_fraction)` units. A split that
/// leaves an arm missing on either side is redrawn with the next sub-seed.
pub fn split_source_target(mut ds: PanelDataset) -> Result<PanelDataset> {
    let n = ds.n();
    if n < 10 {
        return Err(Error::Config(format!("need at least 10 units to split, got {n}")));
    }
    let n_source = ((n as f64 * ds.config.source_fraction).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    for attempt in 0..MAX_RESHUFFLES {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[ds.config.seed, ds.config.replication, seed::SPLIT, attempt]));
        order.sort_unstable();
        order.shuffle(&mut rng);
        for (k, &i) in order.iter().enumerate() {
            ds.role[i] = if k < n_source { Role::Source } else { Role::Target };
        }
        let ok = [Role::Source, Role::Target]
            .iter()
            .all(|&r| Arm::BOTH.iter().all(|&a| ds.count(r, a) > 0));
        if ok {
            return Ok(ds);
        }
    }
    Err(Error::Config(format!(
        "no split in {MAX_RESHUFFLES} attempts put both arms on both sides"
    )))
}
