//! Browser bindings: explore sampled 2-D problem instances, drive a rule
//! episode against the adaptive-DE guide, and sample rule trees from a
//! freshly initialized policy.
//!
//! Every export returns a JSON string so the page needs no extra glue.

use ndarray::{Array1, Array2};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use metabbo::engine::{
    run_episode_observed, EpisodeConfig, FixedRulePolicy, FlaState, RewardVariant,
};
use metabbo::expr::ExprTree;
use metabbo::guide::{EvalMode, GuideConfig, GuideState};
use metabbo::policy::{construct_rule, DecodeMode, PolicyConfig, PolicyParams};
use metabbo::problems::ProblemInstance;

const DIM: usize = 2;
const BOUNDS: (f64, f64) = (-100.0, 100.0);

fn instance(function_id: u8, seed: u64, fe_budget: u64) -> Result<ProblemInstance, String> {
    if !(1..=10).contains(&function_id) {
        return Err(format!("function id {function_id} out of range 1..=10"));
    }
    // Sample offset/rotation from the seed stream, then pin the id.
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset = Array1::from_shape_fn(DIM, |_| rng.gen_range(-80.0..=80.0));
    let rotation = metabbo::problems::random_rotation(DIM, &mut rng);
    ProblemInstance::new(function_id, DIM, BOUNDS, offset, rotation, fe_budget, &mut rng)
        .map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Landscape {
    function_id: u8,
    category: String,
    resolution: usize,
    /// Row-major `log10(1 + f)` over the box, y outer, x inner.
    values: Vec<f64>,
    min_value: f64,
    max_value: f64,
    optimum: [f64; 2],
}

fn landscape_impl(function_id: u8, seed: u64, resolution: usize) -> Result<String, String> {
    let resolution = resolution.clamp(16, 256);
    let p = instance(function_id, seed, u64::MAX)?;
    let (lb, ub) = BOUNDS;
    let step = (ub - lb) / (resolution - 1) as f64;
    let mut values = Vec::with_capacity(resolution * resolution);
    let mut min_value = f64::INFINITY;
    let mut max_value = f64::NEG_INFINITY;
    let mut probe = p.clone();
    for iy in 0..resolution {
        let y = ub - iy as f64 * step;
        for ix in 0..resolution {
            let x = lb + ix as f64 * step;
            let raw = probe.evaluate_shadow(ndarray::array![x, y].view());
            let v = (1.0 + raw.max(0.0)).log10();
            min_value = min_value.min(v);
            max_value = max_value.max(v);
            values.push(v);
        }
    }
    serde_json::to_string(&Landscape {
        function_id,
        category: p.category.tag().to_string(),
        resolution,
        values,
        min_value,
        max_value,
        optimum: [p.offset[0], p.offset[1]],
    })
    .map_err(|e| e.to_string())
}

/// Heatmap of a freshly sampled shifted/rotated instance.
#[wasm_bindgen]
pub fn landscape_grid(function_id: u8, seed: u64, resolution: usize) -> Result<String, JsValue> {
    landscape_impl(function_id, seed, resolution).map_err(|e| JsValue::from_str(&e))
}

#[derive(Serialize)]
struct EpisodeOut {
    rule: String,
    /// Per-iteration populations: `[iteration][individual][coordinate]`.
    populations: Vec<Vec<[f64; 2]>>,
    best_curve: Vec<f64>,
    guide_best_curve: Vec<f64>,
    rewards: Vec<f64>,
    final_best: f64,
    guide_final_best: f64,
}

fn rule_episode_impl(
    rule_text: &str,
    function_id: u8,
    seed: u64,
    pop_size: usize,
    iterations: usize,
) -> Result<String, String> {
    let tree = ExprTree::parse(rule_text).map_err(|e| e.to_string())?;
    if !tree.validate() {
        return Err("rule violates the tree grammar (height 2..=5)".into());
    }
    let pop_size = pop_size.clamp(4, 64);
    let iterations = iterations.clamp(1, 300);
    let budget = (pop_size * (iterations + 1)) as u64;
    let p = instance(function_id, seed, budget)?;

    // Learner episode with per-iteration snapshots.
    let mut p_learner = p.clone();
    let mut policy = FixedRulePolicy::new(tree.clone());
    let cfg = EpisodeConfig {
        pop_size,
        horizon: iterations,
        reward_variant: RewardVariant::Descent,
        guide: GuideConfig::default(),
    };
    let mut populations = Vec::new();
    let mut best_curve = Vec::new();
    let traj = run_episode_observed(
        &mut p_learner,
        &mut policy,
        &cfg,
        &mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed),
        |_, pop| {
            populations.push(
                (0..pop.pop_size())
                    .map(|i| [pop.positions[(i, 0)], pop.positions[(i, 1)]])
                    .collect::<Vec<_>>(),
            );
            best_curve.push(pop.best_so_far_obj);
        },
    )
    .map_err(|e| e.to_string())?;

    // Standalone guide on its own copy of the same instance.
    let mut p_guide = p.clone();
    let mut grng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    use rand::Rng;
    let (lb, ub) = BOUNDS;
    let mut gx = Array2::<f64>::zeros((pop_size, DIM));
    for i in 0..pop_size {
        for d in 0..DIM {
            gx[(i, d)] = grng.gen_range(lb..=ub);
        }
    }
    let mut gobj = Array1::from_shape_fn(pop_size, |i| p_guide.evaluate_shadow(gx.row(i)));
    let mut gstate = GuideState::new(GuideConfig::default(), ChaCha8Rng::seed_from_u64(seed ^ 0xde));
    let mut gbest = gobj.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut guide_best_curve = vec![gbest];
    for _ in 0..iterations {
        let step = gstate
            .step(gx.view(), gobj.view(), &mut p_guide, EvalMode::Shadow)
            .map_err(|e| e.to_string())?;
        gx = step.positions;
        gobj = step.objectives;
        gbest = gbest.min(gobj.iter().cloned().fold(f64::INFINITY, f64::min));
        guide_best_curve.push(gbest);
    }

    serde_json::to_string(&EpisodeOut {
        rule: tree.to_prefix(),
        populations,
        best_curve,
        guide_best_curve,
        rewards: traj.steps.iter().map(|s| s.reward).collect(),
        final_best: traj.final_best,
        guide_final_best: gbest,
    })
    .map_err(|e| e.to_string())
}

/// Run a frozen rule on a sampled instance and race the adaptive-DE guide.
#[wasm_bindgen]
pub fn run_rule_episode(
    rule_text: &str,
    function_id: u8,
    seed: u64,
    pop_size: usize,
    iterations: usize,
) -> Result<String, JsValue> {
    rule_episode_impl(rule_text, function_id, seed, pop_size, iterations)
        .map_err(|e| JsValue::from_str(&e))
}

#[derive(Serialize)]
struct SampledRule {
    rule: String,
    log_prob: f64,
    nodes: usize,
    height: usize,
}

fn sample_rules_impl(seed: u64, count: usize, fla: &[f64]) -> Result<String, String> {
    if fla.len() != 9 {
        return Err("state must have exactly 9 components".into());
    }
    let mut state = [0.0; 9];
    for (s, v) in state.iter_mut().zip(fla.iter()) {
        *s = v.clamp(0.0, 1.0);
    }
    let count = count.clamp(1, 200);
    let params = PolicyParams::init(
        PolicyConfig::default(),
        &mut ChaCha8Rng::seed_from_u64(seed),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let d = construct_rule(&params, &FlaState(state), &mut rng, DecodeMode::Sample);
        out.push(SampledRule {
            rule: d.tree.to_prefix(),
            log_prob: d.log_probs.iter().sum(),
            nodes: d.tree.nodes().len(),
            height: d.tree.height().unwrap_or(0),
        });
    }
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

/// Sample rule trees from a freshly initialized policy conditioned on a
/// 9-component landscape state.
#[wasm_bindgen]
pub fn sample_policy_rules(seed: u64, count: usize, fla: &[f64]) -> Result<String, JsValue> {
    sample_rules_impl(seed, count, fla).map_err(|e| JsValue::from_str(&e))
}

/// The canonical DE/best/1 rule, for the page's input placeholder.
#[wasm_bindgen]
pub fn default_rule() -> String {
    "(+ xbest (* (c 0.5 0) (- xr xr)))".to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn landscape_grid_is_well_formed() {
        for id in [1u8, 4, 6, 9] {
            let json = landscape_impl(id, 7, 32).unwrap();
            let v: serde_json::Value = serde_json::from_str(&json).unwrap();
            assert_eq!(v["resolution"], 32);
            assert_eq!(v["values"].as_array().unwrap().len(), 32 * 32);
            assert!(v["max_value"].as_f64().unwrap() >= v["min_value"].as_f64().unwrap());
        }
        assert!(landscape_impl(11, 7, 32).is_err());
    }

    #[test]
    fn rule_episode_improves_and_is_deterministic() {
        let a = rule_episode_impl("(+ xbest (* (c 0.5 0) (- xr xr)))", 1, 3, 10, 40).unwrap();
        let b = rule_episode_impl("(+ xbest (* (c 0.5 0) (- xr xr)))", 1, 3, 10, 40).unwrap();
        assert_eq!(a, b);
        let v: serde_json::Value = serde_json::from_str(&a).unwrap();
        let curve = v["best_curve"].as_array().unwrap();
        assert_eq!(curve.len(), 41);
        let first = curve[0].as_f64().unwrap();
        let last = curve[curve.len() - 1].as_f64().unwrap();
        assert!(last <= first);
        assert_eq!(v["populations"].as_array().unwrap().len(), 41);
        assert!(rule_episode_impl("x", 1, 3, 10, 40).is_err());
        assert!(rule_episode_impl("(+ x", 1, 3, 10, 40).is_err());
    }

    #[test]
    fn sampled_rules_are_valid_and_reproducible() {
        let fla = [0.5; 9];
        let a = sample_rules_impl(5, 20, &fla).unwrap();
        let b = sample_rules_impl(5, 20, &fla).unwrap();
        assert_eq!(a, b);
        let v: serde_json::Value = serde_json::from_str(&a).unwrap();
        for item in v.as_array().unwrap() {
            let rule = item["rule"].as_str().unwrap();
            assert!(ExprTree::parse(rule).unwrap().validate());
            let h = item["height"].as_u64().unwrap();
            assert!((2..=5).contains(&h));
        }
        assert!(sample_rules_impl(5, 20, &[0.5; 3]).is_err());
    }
}
