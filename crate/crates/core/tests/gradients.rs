use catcast_core::ingest::{synth_generate, Cardinalities, GeneratorSpec};
use catcast_core::neural::{
    build_stage_model, grad_check, resolvable, Activation, ArchOverrides, Batch, ConvBlock,
    EmbeddingSpec, Family, InputSpec, LayerSpec, ModelGraph,
};
use catcast_core::pipeline::build_stage_plan;
use catcast_core::rng::seeded;
use rand::Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn toy_input() -> InputSpec {
    InputSpec::Embeddings {
        tables: vec![
            EmbeddingSpec {
                variable: "A".into(),
                rows: 5,
                dim: 3,
            },
            EmbeddingSpec {
                variable: "B".into(),
                rows: 4,
                dim: 4,
            },
            EmbeddingSpec {
                variable: "C".into(),
                rows: 6,
                dim: 2,
            },
        ],
    }
}

fn toy_batch(n: usize, seed: u64) -> (Vec<u32>, Vec<u32>) {
    let mut rng = seeded(seed);
    let mut ix = Vec::new();
    for _ in 0..n {
        ix.extend([
            rng.gen_range(0..5),
            rng.gen_range(0..4),
            rng.gen_range(0..6),
        ]);
    }
    let labels = (0..n).map(|_| rng.gen_range(0..3)).collect();
    (ix, labels)
}

fn check(trunk: Vec<LayerSpec>, seed: u64, scale: f64) -> f64 {
    let mut m = ModelGraph::new(toy_input(), trunk).unwrap();
    m.init_params(seed);
    scale_up(&mut m, scale);
    let (ix, labels) = toy_batch(6, seed);
    let r = grad_check(&m, Batch::Indices(&ix), &labels, H, seed).unwrap();
    assert!(r.max_rel_error < TOL, "{r:?}");
    r.max_rel_error
}

/// Spreads embeddings so pre-activations sit away from ReLU and pooling kinks.
/// Saturating activations keep a small scale to avoid vanishing gradients.
fn scale_for(act: Activation) -> f64 {
    match act {
        Activation::Tanh | Activation::Sigmoid => 1.0,
        Activation::HardSigmoid => 4.0,
        _ => 20.0,
    }
}

fn scale_up(m: &mut ModelGraph, scale: f64) {
    for p in m.params_mut() {
        if p.name.starts_with("embedding") {
            for v in &mut p.data {
                *v *= scale;
            }
        }
    }
}

#[test]
fn dense_layers_every_activation() {
    for act in [
        Activation::Relu,
        Activation::Tanh,
        Activation::Sigmoid,
        Activation::HardSigmoid,
        Activation::Identity,
    ] {
        let e = check(
            vec![
                LayerSpec::Dense {
                    units: 7,
                    activation: act,
                },
                LayerSpec::Dense {
                    units: 5,
                    activation: act,
                },
                LayerSpec::SoftmaxOutput { classes: 3 },
            ],
            11,
            scale_for(act),
        );
        eprintln!("dense {act}: {e:.2e}");
    }
}

#[test]
fn conv_pool_flatten_every_activation() {
    for act in [
        Activation::Relu,
        Activation::Tanh,
        Activation::Sigmoid,
        Activation::HardSigmoid,
    ] {
        let e = check(
            vec![
                LayerSpec::Conv1d {
                    filters: 3,
                    kernel: 3,
                    activation: act,
                },
                LayerSpec::MaxPool1d { size: 2 },
                LayerSpec::Conv1d {
                    filters: 4,
                    kernel: 2,
                    activation: act,
                },
                LayerSpec::MaxPool1d { size: 2 },
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    units: 5,
                    activation: act,
                },
                LayerSpec::SoftmaxOutput { classes: 3 },
            ],
            12,
            scale_for(act),
        );
        eprintln!("conv {act}: {e:.2e}");
    }
}

#[test]
fn dropout_with_fixed_masks() {
    let e = check(
        vec![
            LayerSpec::Dense {
                units: 8,
                activation: Activation::Tanh,
            },
            LayerSpec::Dropout { rate: 0.3 },
            LayerSpec::Dense {
                units: 6,
                activation: Activation::Sigmoid,
            },
            LayerSpec::Dropout { rate: 0.5 },
            LayerSpec::SoftmaxOutput { classes: 3 },
        ],
        13,
        1.0,
    );
    eprintln!("dropout: {e:.2e}");
}

#[test]
fn dense_input_model() {
    let mut m = ModelGraph::new(
        InputSpec::Dense { width: 6 },
        vec![
            LayerSpec::Conv1d {
                filters: 2,
                kernel: 2,
                activation: Activation::Tanh,
            },
            LayerSpec::Flatten,
            LayerSpec::SoftmaxOutput { classes: 4 },
        ],
    )
    .unwrap();
    m.init_params(2);
    let mut rng = seeded(3);
    let x: Vec<f64> = (0..5 * 6).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let r = grad_check(&m, Batch::Dense(&x), &[0, 1, 2, 3, 1], H, 0).unwrap();
    assert!(r.max_rel_error < TOL, "{r:?}");
}

#[test]
fn reduced_stage_architectures() {
    let spec = GeneratorSpec::random(Cardinalities::uniform(4), 0.1, 21);
    let table = synth_generate(&spec, 40).unwrap();
    let schema = table.schema();
    let mut rng = seeded(22);
    for stage in 1..=3u8 {
        let plan = build_stage_plan(stage, schema).unwrap();
        let dims = [3, 4, 3, 5, 4, 4][..plan.inputs.len()].to_vec();
        let family = Family::stage_default(stage);
        let overrides = ArchOverrides {
            embedding_dims: Some(dims),
            hidden: Some(if family == Family::Mlp {
                vec![32, 16, 8]
            } else {
                vec![16, 8]
            }),
            conv: Some(vec![
                ConvBlock {
                    filters: 4,
                    kernel: 4,
                    pool: 2,
                },
                ConvBlock {
                    filters: 6,
                    kernel: 3,
                    pool: 2,
                },
            ]),
            ..Default::default()
        };
        let mut m =
            build_stage_model(stage, schema, family, &overrides, 30 + stage as u64).unwrap();
        scale_up(&mut m, 20.0);
        let cols: Vec<usize> = plan
            .inputs
            .iter()
            .map(|n| schema.position(n).unwrap())
            .collect();
        let target = schema.position(&plan.target).unwrap();
        let rows: Vec<usize> = (0..5).map(|_| rng.gen_range(0..table.n_rows())).collect();
        let ix = table.gather(&rows, &cols);
        let labels: Vec<u32> = rows.iter().map(|&r| table.get(r, target) - 1).collect();
        let r = grad_check(&m, Batch::Indices(&ix), &labels, H, 5).unwrap();
        eprintln!(
            "stage {stage} ({family}): {:.2e} over {} parameters",
            r.max_rel_error, r.checked
        );
        assert!(r.max_rel_error < TOL, "stage {stage}: {r:?}");
    }
}

#[test]
fn resolvable_rejects_a_kink_at_the_point() {
    // zero inputs and zero biases put every ReLU pre-activation exactly on the kink
    let mut m = ModelGraph::new(
        InputSpec::Dense { width: 3 },
        vec![
            LayerSpec::Dense {
                units: 4,
                activation: Activation::Relu,
            },
            LayerSpec::SoftmaxOutput { classes: 3 },
        ],
    )
    .unwrap();
    m.init_params(1);
    let x = [0.0; 6];
    assert!(!resolvable(&m, Batch::Dense(&x), &[0, 2], H, 0).unwrap());
    let r = grad_check(&m, Batch::Dense(&x), &[0, 2], H, 0).unwrap();
    assert!(r.max_rel_error > TOL, "{r:?}");
}

#[test]
fn resolvable_accepts_a_smooth_well_scaled_model() {
    let mut m = ModelGraph::new(
        InputSpec::Dense { width: 3 },
        vec![
            LayerSpec::Dense {
                units: 4,
                activation: Activation::Tanh,
            },
            LayerSpec::SoftmaxOutput { classes: 3 },
        ],
    )
    .unwrap();
    m.init_params(2);
    let x = [0.9, -1.3, 0.4, 1.1, 0.7, -0.8];
    assert!(resolvable(&m, Batch::Dense(&x), &[0, 2], H, 0).unwrap());
}
