use std::collections::BTreeMap;

use catcast_core::columns::{ACTION_TAKEN, HAZARD_CATEGORY, PRODUCT_CATEGORY, STAGE1_INPUTS};
use catcast_core::ingest::{synth_generate, Cardinalities, GeneratorSpec, MappingOracle};
use catcast_core::pipeline::{
    build_stage_plan, chain_predict, evaluate_stage, EvalMode, StagePredictor, STAGES,
};

#[test]
fn plans_nest_on_register_cardinalities() {
    let spec = GeneratorSpec::random(Cardinalities::register(), 0.0, 8);
    let table = synth_generate(&spec, 20_000).unwrap();
    let schema = table.schema();
    let plans: Vec<_> = STAGES
        .iter()
        .map(|&s| build_stage_plan(s, schema).unwrap())
        .collect();
    assert_eq!(
        plans.iter().map(|p| p.inputs.len()).collect::<Vec<_>>(),
        [4, 5, 6]
    );
    assert_eq!(plans[0].inputs, STAGE1_INPUTS.map(String::from));
    assert_eq!(
        plans.iter().map(|p| p.target.as_str()).collect::<Vec<_>>(),
        [PRODUCT_CATEGORY, HAZARD_CATEGORY, ACTION_TAKEN]
    );
    assert_eq!(
        plans
            .iter()
            .map(|p| p.target_cardinality)
            .collect::<Vec<_>>(),
        [38, 35, 24]
    );
    for w in plans.windows(2) {
        assert_eq!(w[1].inputs[..w[0].inputs.len()], w[0].inputs[..]);
        assert_eq!(w[1].inputs.last(), Some(&w[0].target));
    }
    assert!(build_stage_plan(4, schema).is_err());
    assert!(build_stage_plan(0, schema).is_err());
}

fn oracles(spec: &GeneratorSpec, table: &catcast_core::schema::Table) -> Vec<MappingOracle> {
    STAGES
        .iter()
        .map(|&s| {
            MappingOracle::new(
                spec,
                table.schema(),
                &build_stage_plan(s, table.schema()).unwrap(),
            )
            .unwrap()
        })
        .collect()
}

#[test]
fn noiseless_oracle_chain_reproduces_the_generator() {
    let spec = GeneratorSpec::random(Cardinalities::uniform(12), 0.0, 5);
    let table = synth_generate(&spec, 1000).unwrap();
    let models = oracles(&spec, &table);
    let chain: Vec<&dyn StagePredictor> = models.iter().map(|m| m as &dyn StagePredictor).collect();
    let schema = table.schema();
    let mut agree = 0;
    for r in 0..table.n_rows() {
        let record: BTreeMap<String, String> = STAGE1_INPUTS
            .iter()
            .map(|&n| {
                (
                    n.to_owned(),
                    table
                        .value(r, schema.position(n).unwrap())
                        .unwrap()
                        .to_owned(),
                )
            })
            .collect();
        let out = chain_predict(&record, &chain).unwrap();
        let got: Vec<&str> = out
            .iter()
            .map(|p| p.candidates[0].category.as_str())
            .collect();
        let want: Vec<&str> = [PRODUCT_CATEGORY, HAZARD_CATEGORY, ACTION_TAKEN]
            .iter()
            .map(|n| table.value(r, schema.position(n).unwrap()).unwrap())
            .collect();
        assert!(out.iter().all(|p| p.candidates[0].probability >= 0.99));
        agree += (got == want) as usize;
    }
    assert_eq!(agree, 1000);
}

#[test]
fn noiseless_oracle_scores_one_in_both_modes() {
    let spec = GeneratorSpec::random(Cardinalities::uniform(7), 0.0, 6);
    let table = synth_generate(&spec, 1500).unwrap();
    let models = oracles(&spec, &table);
    let rows: Vec<usize> = (0..table.n_rows()).collect();
    for (i, m) in models.iter().enumerate() {
        let upstream: Vec<&dyn StagePredictor> = models[..i]
            .iter()
            .map(|m| m as &dyn StagePredictor)
            .collect();
        for mode in [EvalMode::TeacherForced, EvalMode::Chained] {
            let r = evaluate_stage(m, &table, &rows, mode, &upstream).unwrap();
            assert_eq!(
                (r.top1, r.top2, r.top3),
                (1.0, 1.0, 1.0),
                "stage {} {mode}",
                i + 1
            );
        }
    }
}

#[test]
fn chained_evaluation_needs_its_upstream_models() {
    let spec = GeneratorSpec::random(Cardinalities::uniform(5), 0.0, 1);
    let table = synth_generate(&spec, 200).unwrap();
    let models = oracles(&spec, &table);
    let rows: Vec<usize> = (0..50).collect();
    assert!(evaluate_stage(&models[2], &table, &rows, EvalMode::Chained, &[&models[0]]).is_err());
    assert!(evaluate_stage(&models[1], &table, &rows, EvalMode::Chained, &[&models[2]]).is_err());
    assert!(evaluate_stage(&models[2], &table, &rows, EvalMode::TeacherForced, &[]).is_ok());
}
