//! Seeded API sampling for query synthesis: half the requested APIs come
//! from the built-in app, the rest from a small set of third-party apps so
//! the draw stays functionally coherent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use flowforge_core::registry::ApiRegistry;

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingConfig {
    pub n_apis: usize,
    /// Bounds on the third-party app draw; must stay within 1..=5.
    pub n_apps_range: (usize, usize),
    pub seed: u64,
    pub builtin_app_id: String,
}

impl SamplingConfig {
    pub fn new(n_apis: usize, seed: u64, builtin_app_id: &str) -> Self {
        SamplingConfig {
            n_apis,
            n_apps_range: (1, 5),
            seed,
            builtin_app_id: builtin_app_id.to_string(),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SamplingError {
    #[error("n_apis must be positive")]
    ZeroApis,
    #[error("app range {0}..={1} is outside 1..=5")]
    BadAppRange(usize, usize),
    #[error("need {need} built-in APIs but the registry has {have}")]
    NotEnoughBuiltins { need: usize, have: usize },
    #[error("registry has no third-party application")]
    NoThirdPartyApps,
}

/// Outcome of one draw. All id lists are sorted; `shortfall` is how many
/// third-party APIs were requested beyond what the chosen apps provide.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampledApis {
    pub builtin: Vec<String>,
    pub third_party: Vec<String>,
    pub apps: Vec<String>,
    pub shortfall: usize,
}

impl SampledApis {
    /// All drawn API ids, sorted.
    pub fn ids(&self) -> Vec<String> {
        let mut out: Vec<String> =
            self.builtin.iter().chain(&self.third_party).cloned().collect();
        out.sort();
        out
    }
}

/// Uniform draw without replacement of `count` items, by partial
/// Fisher-Yates over a copy.
pub(crate) fn draw<T: Clone>(rng: &mut ChaCha8Rng, items: &[T], count: usize) -> Vec<T> {
    let mut pool = items.to_vec();
    let mut out = Vec::with_capacity(count.min(pool.len()));
    while out.len() < count && !pool.is_empty() {
        let at = rng.random_range(0..pool.len());
        out.push(pool.swap_remove(at));
    }
    out
}

/// Draw order is fixed: built-in APIs, then the app count, then the apps,
/// then the pooled third-party APIs. Changing it would change every seeded
/// corpus, so it is part of the contract.
pub fn sample_apis(
    registry: &ApiRegistry,
    cfg: &SamplingConfig,
) -> Result<SampledApis, SamplingError> {
    if cfg.n_apis == 0 {
        return Err(SamplingError::ZeroApis);
    }
    let (lo, hi) = cfg.n_apps_range;
    if lo < 1 || hi > 5 || lo > hi {
        return Err(SamplingError::BadAppRange(lo, hi));
    }

    let need = cfg.n_apis / 2;
    let builtin_pool: Vec<String> =
        registry.apps().get(&cfg.builtin_app_id).cloned().unwrap_or_default();
    if builtin_pool.len() < need {
        return Err(SamplingError::NotEnoughBuiltins { need, have: builtin_pool.len() });
    }
    let third_apps: Vec<String> = registry
        .apps()
        .keys()
        .filter(|app| **app != cfg.builtin_app_id)
        .cloned()
        .collect();
    if third_apps.is_empty() {
        return Err(SamplingError::NoThirdPartyApps);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut builtin = draw(&mut rng, &builtin_pool, need);

    let hi = hi.min(third_apps.len());
    let lo = lo.min(hi);
    let k = rng.random_range(lo..=hi);
    let mut apps = draw(&mut rng, &third_apps, k);

    let mut pool: Vec<String> = apps
        .iter()
        .flat_map(|app| registry.apps().get(app).cloned().unwrap_or_default())
        .collect();
    pool.sort();
    let rest = cfg.n_apis - need;
    let shortfall = rest.saturating_sub(pool.len());
    let mut third_party = draw(&mut rng, &pool, rest);

    builtin.sort();
    third_party.sort();
    apps.sort();
    Ok(SampledApis { builtin, third_party, apps, shortfall })
}
