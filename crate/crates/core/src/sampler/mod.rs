//! Stratified context sampling over the record store.

mod context;
mod plan;
mod stratum;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use context::{
    build_context, context_seed, describe, load_contexts, select_capped, VesselContext, VesselTrack,
};
pub use plan::{stratify_plan, InsufficientCell, PlanEntry, StratifyPlan};
pub use stratum::{
    AreaType, DensityTier, Geography, Port, Region, RegionDef, Season, Stratum, StratumCell,
    TimeBucket,
};

use crate::ais::RecordStore;
use crate::error::{Error, Result};

/// Which teacher role generates a context's questions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    /// General chat model role (GPT-4o in the original setup).
    ModelA,
    /// Reasoning model role (o3-mini in the original setup).
    ModelB,
}

impl Generator {
    pub fn as_str(self) -> &'static str {
        match self {
            Generator::ModelA => "model_a",
            Generator::ModelB => "model_b",
        }
    }
}

/// Block length of the alternation schedule.
pub const GENERATOR_BLOCK: usize = 7;

/// One context in every block of seven goes to the reasoning model.
pub fn assign_generator(context_id: usize) -> Generator {
    if context_id % GENERATOR_BLOCK == GENERATOR_BLOCK - 1 {
        Generator::ModelB
    } else {
        Generator::ModelA
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub target_contexts: usize,
    pub window_minutes: u32,
    pub min_vessels: usize,
    pub max_vessels: usize,
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_minutes == 0 {
            return Err(Error::Config("window_minutes must be positive".into()));
        }
        if self.min_vessels == 0 || self.min_vessels > self.max_vessels {
            return Err(Error::Config("need 0 < min_vessels <= max_vessels".into()));
        }
        Ok(())
    }
}

/// Result of a sampling run.
#[derive(Debug)]
pub struct SampleOutcome {
    pub plan: StratifyPlan,
    pub contexts: Vec<VesselContext>,
    /// Contexts that could not be built, with the reason.
    pub failures: Vec<(usize, String)>,
}

/// Plan, then build every planned context with a per-context seed.
///
/// Context ids follow plan order; window choice and vessel selection depend only
/// on `(seed, context_id)`, so the parallel build is schedule-independent.
pub fn sample_contexts(
    store: &RecordStore,
    geo: &Geography,
    cfg: &SamplingConfig,
    target_contexts: usize,
    seed: u64,
) -> Result<SampleOutcome> {
    let plan = stratify_plan(store, geo, cfg, target_contexts)?;
    let mut jobs = Vec::with_capacity(plan.total());
    for entry in &plan.entries {
        for k in 0..entry.count {
            jobs.push((jobs.len(), entry, k));
        }
    }
    let built: Vec<(usize, Result<VesselContext>)> = jobs
        .par_iter()
        .map(|&(id, entry, k)| {
            let s = context_seed(seed, id);
            let offset = (s % entry.windows.len() as u64) as usize;
            let window = entry.windows[(offset + k) % entry.windows.len()];
            let ctx = build_context(store, geo, cfg, entry.stratum, window, s).map(|c| c.with_id(id));
            (id, ctx)
        })
        .collect();

    let mut contexts = Vec::new();
    let mut failures = Vec::new();
    for (id, result) in built {
        match result {
            Ok(c) => contexts.push(c),
            Err(e) => failures.push((id, e.to_string())),
        }
    }
    Ok(SampleOutcome {
        plan,
        contexts,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ais::{AisRecord, Mmsi, TimeWindow};
    use crate::ais::record::parse_timestamp;
    use crate::config::PipelineConfig;
    use chrono::Duration;
    use proptest::prelude::*;

    #[test]
    fn generator_schedule() {
        assert_eq!(assign_generator(0), Generator::ModelA);
        assert_eq!(assign_generator(5), Generator::ModelA);
        assert_eq!(assign_generator(6), Generator::ModelB);
        assert_eq!(assign_generator(13), Generator::ModelB);
        let b = (0..1750).filter(|&i| assign_generator(i) == Generator::ModelB).count();
        assert_eq!(b, 250);
    }

    proptest! {
        #[test]
        fn one_in_seven_blocks(k in 1usize..2000) {
            let b = (0..7 * k).filter(|&i| assign_generator(i) == Generator::ModelB).count();
            prop_assert_eq!(b, k);
        }
    }

    fn cfg() -> (Geography, SamplingConfig) {
        let c = PipelineConfig::builtin();
        (c.geography.clone(), c.sampling.clone())
    }

    /// `n` vessels parked in a ring around a port, one record each minute for `minutes`.
    fn port_store(geo: &Geography, port: &str, n: usize, first_mmsi: u32, minutes: i64) -> Vec<AisRecord> {
        let p = geo.port(port).unwrap();
        let start = parse_timestamp("2024-03-01T18:00:00").unwrap();
        let mut out = Vec::new();
        for v in 0..n {
            let ang = v as f64 * 0.37;
            let rad = 0.02 + 0.05 * ((v % 10) as f64 / 10.0);
            for m in 0..minutes {
                out.push(
                    AisRecord::new(
                        Mmsi::new(first_mmsi + v as u32).unwrap(),
                        start + Duration::minutes(m * 3),
                        p.lat + rad * ang.sin(),
                        p.lon + rad * ang.cos(),
                    )
                    .with_kinematics(0.5, 90.0)
                    .with_type_code(70)
                    .with_status_code(1),
                );
            }
        }
        out
    }

    fn store_of(records: Vec<AisRecord>) -> RecordStore {
        let mut s = RecordStore::new();
        for r in records {
            s.insert(r);
        }
        s.finalize();
        s
    }

    fn four_region_store(geo: &Geography, per_region: usize) -> RecordStore {
        let mut recs = port_store(geo, "New York", per_region, 367_000_000, 2);
        recs.extend(port_store(geo, "Houston", per_region, 368_000_000, 2));
        recs.extend(port_store(geo, "Los Angeles", per_region, 369_000_000, 2));
        recs.extend(port_store(geo, "Chicago", per_region, 366_000_000, 2));
        store_of(recs)
    }

    #[test]
    fn plan_covers_every_region() {
        let (geo, sc) = cfg();
        let store = four_region_store(&geo, 220);
        let plan = stratify_plan(&store, &geo, &sc, 8).unwrap();
        assert_eq!(plan.total(), 8);
        for r in Region::ALL {
            let n: usize = plan.entries.iter().filter(|e| e.stratum.region == r).map(|e| e.count).sum();
            assert!(n >= 1, "{r:?} missing");
        }
        assert!(plan.coverage_warnings.is_empty());
        let plan = stratify_plan(&store, &geo, &sc, 1750).unwrap();
        assert_eq!(plan.total(), 1750);
    }

    #[test]
    fn degraded_coverage_is_reported() {
        let (geo, sc) = cfg();
        let store = store_of(port_store(&geo, "Houston", 210, 368_000_000, 2));
        let plan = stratify_plan(&store, &geo, &sc, 4).unwrap();
        assert_eq!(plan.total(), 4);
        assert!(plan.entries.iter().all(|e| e.stratum.region == Region::GulfOfMexico));
        assert_eq!(plan.coverage_warnings.len(), 3);
    }

    #[test]
    fn empty_store_is_an_error() {
        let (geo, sc) = cfg();
        assert!(matches!(
            stratify_plan(&RecordStore::new(), &geo, &sc, 4),
            Err(Error::EmptyStore)
        ));
    }

    #[test]
    fn insufficient_cells_listed() {
        let (geo, sc) = cfg();
        let mut recs = port_store(&geo, "Houston", 210, 368_000_000, 2);
        recs.extend(port_store(&geo, "Seattle", 20, 369_000_000, 2));
        let plan = stratify_plan(&store_of(recs), &geo, &sc, 2).unwrap();
        assert!(plan
            .insufficient
            .iter()
            .any(|c| c.cell.region == Region::WestCoast && c.best_window_vessels == 20));
    }

    fn window() -> TimeWindow {
        TimeWindow::new(
            parse_timestamp("2024-03-01T18:00:00").unwrap(),
            parse_timestamp("2024-03-01T20:00:00").unwrap(),
        )
        .unwrap()
    }

    fn houston_stratum(geo: &Geography, store: &RecordStore) -> Stratum {
        let r = &store.records()[0];
        let cell = geo.cells_of(r).find(|c| c.region == Region::GulfOfMexico).unwrap();
        Stratum::new(cell, DensityTier::Low)
    }

    #[test]
    fn under_cap_takes_all() {
        let (geo, sc) = cfg();
        let store = store_of(port_store(&geo, "Houston", 450, 368_000_000, 2));
        let ctx = build_context(&store, &geo, &sc, houston_stratum(&geo, &store), window(), 1).unwrap();
        assert_eq!(ctx.vessel_count(), 450);
        assert_eq!(ctx.stratum.density_tier, DensityTier::Medium);
        ctx.check_invariants(&geo, &sc).unwrap();
    }

    #[test]
    fn over_cap_is_seed_reproducible() {
        let (geo, sc) = cfg();
        let store = store_of(port_store(&geo, "Houston", 800, 368_000_000, 1));
        let s = houston_stratum(&geo, &store);
        let a = build_context(&store, &geo, &sc, s, window(), 42).unwrap();
        let b = build_context(&store, &geo, &sc, s, window(), 42).unwrap();
        let c = build_context(&store, &geo, &sc, s, window(), 43).unwrap();
        assert_eq!(a.vessel_count(), 500);
        assert_eq!(a.qualifying_vessels, 800);
        assert_eq!(a.to_json(), b.to_json());
        assert_ne!(a.to_json(), c.to_json());
        a.check_invariants(&geo, &sc).unwrap();
    }

    #[test]
    fn below_floor_is_insufficient() {
        let (geo, sc) = cfg();
        let store = store_of(port_store(&geo, "Houston", 150, 368_000_000, 2));
        let err = build_context(&store, &geo, &sc, houston_stratum(&geo, &store), window(), 1).unwrap_err();
        match err {
            Error::InsufficientVessels { stratum, found, .. } => {
                assert_eq!(found, 150);
                assert!(stratum.contains("gulf_of_mexico"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn context_file_round_trip() {
        let (geo, sc) = cfg();
        let store = store_of(port_store(&geo, "Houston", 210, 368_000_000, 3));
        let ctx = build_context(&store, &geo, &sc, houston_stratum(&geo, &store), window(), 9)
            .unwrap()
            .with_id(6);
        assert_eq!(ctx.generator, Generator::ModelB);
        let back = VesselContext::from_json(&ctx.to_json()).unwrap();
        assert_eq!(back, ctx);
    }

    #[test]
    fn sampling_is_deterministic() {
        let (geo, sc) = cfg();
        let store = four_region_store(&geo, 230);
        let a = sample_contexts(&store, &geo, &sc, 6, 5).unwrap();
        let b = sample_contexts(&store, &geo, &sc, 6, 5).unwrap();
        assert_eq!(a.contexts.len(), 6);
        assert!(a.failures.is_empty());
        for (x, y) in a.contexts.iter().zip(&b.contexts) {
            assert_eq!(x.to_json(), y.to_json());
            x.check_invariants(&geo, &sc).unwrap();
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn random_stores_yield_valid_contexts(n in 200usize..700, seed in any::<u64>(), minutes in 1i64..4) {
            let (geo, sc) = cfg();
            let store = store_of(port_store(&geo, "Los Angeles", n, 369_000_000, minutes));
            let out = sample_contexts(&store, &geo, &sc, 3, seed).unwrap();
            prop_assert_eq!(out.contexts.len(), 3);
            for c in &out.contexts {
                prop_assert!(c.check_invariants(&geo, &sc).is_ok());
                prop_assert_eq!(c.vessel_count(), n.min(500));
            }
        }
    }
}
