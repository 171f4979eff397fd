use catcast_core::artifact::{decode_model, encode_model, FORMAT_NAME};
use catcast_core::baselines::{ForestConfig, LogRegConfig, TreeConfig};
use catcast_core::encoders::EncodingScheme;
use catcast_core::ingest::{synth_generate, Cardinalities, GeneratorSpec};
use catcast_core::neural::{
    load_model, save_model, Activation, ArchOverrides, Architecture, ConvBlock, Family,
    InputEncoding, OptimizerKind, TrainConfig,
};
use catcast_core::pipeline::{
    build_stage_plan, fit_stage, ModelChoice, StageModel, StagePredictor,
};
use catcast_core::schema::Table;

fn fixture() -> Table {
    synth_generate(
        &GeneratorSpec::random(Cardinalities::uniform(6), 0.1, 17),
        400,
    )
    .unwrap()
}

fn neural(table: &Table, stage: u8, family: Family, encoding: InputEncoding) -> ModelChoice {
    let plan = build_stage_plan(stage, table.schema()).unwrap();
    let arch = Architecture::stage_default(&plan, table.schema(), family)
        .unwrap()
        .apply(&ArchOverrides {
            encoding: Some(encoding),
            hidden: Some(vec![16, 8]),
            conv: Some(vec![ConvBlock {
                filters: 4,
                kernel: 3,
                pool: 2,
            }]),
            activation: Some(Activation::Tanh),
            ..Default::default()
        });
    let train = TrainConfig {
        epochs: 2,
        batch_size: 32,
        learning_rate: 0.01,
        optimizer: OptimizerKind::Adam,
        seed: 3,
    };
    ModelChoice::Neural { arch, train }
}

fn choices(table: &Table) -> Vec<(u8, ModelChoice)> {
    let onehot = EncodingScheme::OneHot;
    vec![
        (1, neural(table, 1, Family::Mlp, InputEncoding::Embedding)),
        (
            2,
            neural(table, 2, Family::Conv1d, InputEncoding::Embedding),
        ),
        (
            3,
            neural(
                table,
                3,
                Family::Mlp,
                InputEncoding::Classical(EncodingScheme::Binary),
            ),
        ),
        (
            1,
            neural(
                table,
                1,
                Family::Mlp,
                InputEncoding::Classical(EncodingScheme::Hashing { buckets: 16 }),
            ),
        ),
        (
            1,
            ModelChoice::Logreg {
                encoding: onehot,
                config: LogRegConfig {
                    epochs: 3,
                    ..Default::default()
                },
            },
        ),
        (
            2,
            ModelChoice::Tree {
                encoding: EncodingScheme::Integer,
                config: TreeConfig::default(),
            },
        ),
        (
            3,
            ModelChoice::Forest {
                encoding: onehot,
                config: ForestConfig {
                    n_trees: 5,
                    ..Default::default()
                },
            },
        ),
    ]
}

fn trained(table: &Table, stage: u8, choice: &ModelChoice) -> StageModel {
    let rows: Vec<usize> = (0..300).collect();
    fit_stage(
        table,
        &rows,
        &[],
        &build_stage_plan(stage, table.schema()).unwrap(),
        choice,
    )
    .unwrap()
    .model
}

#[test]
fn save_and_load_preserve_outputs_exactly() {
    let table = fixture();
    let dir = tempfile::tempdir().unwrap();
    let rows: Vec<usize> = (300..400).collect();
    for (i, (stage, choice)) in choices(&table).iter().enumerate() {
        let model = trained(&table, *stage, choice);
        let path = dir.path().join(format!("m{i}.model"));
        save_model(&model, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, model, "{}", model.body.kind());
        let cols: Vec<usize> = model
            .plan
            .inputs
            .iter()
            .map(|n| table.schema().position(n).unwrap())
            .collect();
        let x = table.gather(&rows, &cols);
        let a = model.predict_proba(&x).unwrap();
        let b = back.predict_proba(&x).unwrap();
        let bits = |m: &catcast_core::tensor::Matrix| {
            m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(bits(&a), bits(&b), "{}", model.body.kind());
        assert_eq!(encode_model(&back).unwrap(), std::fs::read(&path).unwrap());
    }
}

#[test]
fn header_names_the_format() {
    let table = fixture();
    let (stage, choice) = &choices(&table)[0];
    let bytes = encode_model(&trained(&table, *stage, choice)).unwrap();
    let first = bytes.split(|&b| b == b'\n').next().unwrap();
    assert_eq!(first, format!("{FORMAT_NAME} 1").as_bytes());
}

#[test]
fn corrupted_payload_is_rejected() {
    let table = fixture();
    let (stage, choice) = &choices(&table)[0];
    let mut bytes = encode_model(&trained(&table, *stage, choice)).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x01;
    assert!(decode_model(&bytes).is_err());
    let good = encode_model(&trained(&table, *stage, choice)).unwrap();
    assert!(decode_model(&good[..good.len() - 8]).is_err());
    assert!(decode_model(b"not-a-model 1\n{}\n").is_err());
}

#[test]
fn loaded_models_keep_their_provenance() {
    let table = fixture();
    let (stage, choice) = &choices(&table)[4];
    let model = trained(&table, *stage, choice);
    let back = decode_model(&encode_model(&model).unwrap()).unwrap();
    assert_eq!(back.provenance.choice, *choice);
    assert_eq!(back.provenance.data, table.provenance());
    assert_eq!(back.plan(), &model.plan);
}
