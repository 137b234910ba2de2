use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use streamgnn_core::baseline::{affected_inference, full_inference, Embeddings};
use streamgnn_core::graph::{parse_edge_list, parse_update_stream};
use streamgnn_core::model::{BuiltinConfig, HookRegistry, WeightSet};
use streamgnn_core::stats::parse_records;
use streamgnn_core::synth::{generate, SyntheticConfig};
use streamgnn_core::tensor_file;
use streamgnn_core::{CheckpointStore, DynamicGraph, Engine, Matrix, Model, ModelSpec, Report, Stage};

use crate::{GenArgs, InitArgs, ModelArgs, ReportArgs, StreamArgs, VerifyArgs, VerifyMode};

/// Name of the edge list stored next to the checkpoint tensors.
const CHECKPOINT_GRAPH: &str = "graph.txt";

/// Checkpoints differ from full inference.
#[derive(Debug)]
pub struct Mismatch {
    pub stage: Stage,
    pub layer: usize,
    pub node: usize,
    pub index: usize,
    pub round: Option<u64>,
}

impl fmt::Display for Mismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let stage = match self.stage {
            Stage::Message => "message",
            Stage::Aggregated => "aggregate",
        };
        write!(
            f,
            "verification mismatch: {stage} layer {} node {} index {}",
            self.layer, self.node, self.index
        )?;
        if let Some(r) = self.round {
            write!(f, " after round {r}")?;
        }
        Ok(())
    }
}

impl std::error::Error for Mismatch {}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_model(args: &ModelArgs, input_len: usize) -> Result<Model> {
    let spec = ModelSpec::parse(&read_text(&args.model)?)
        .with_context(|| format!("parsing {}", args.model.display()))?;
    let weights = WeightSet::load(&args.weights)
        .with_context(|| format!("loading weights {}", args.weights.display()))?;
    Ok(Model::new(spec, weights, HookRegistry::builtin(), input_len)?)
}

fn load_features(path: &Path) -> Result<Matrix> {
    tensor_file::read_matrix(path).with_context(|| format!("reading features {}", path.display()))
}

fn check_against_full(
    g: &DynamicGraph,
    store: &CheckpointStore,
    features: &Matrix,
    model: &Model,
    round: Option<u64>,
) -> Result<()> {
    let want = full_inference(g, features, model)?.embeddings.into_store(model)?;
    if let Some((stage, layer, node, index)) = store.first_difference(&want) {
        return Err(Mismatch {
            stage,
            layer,
            node,
            index,
            round,
        }
        .into());
    }
    Ok(())
}

fn save_checkpoint(dir: &Path, g: &DynamicGraph, store: &CheckpointStore) -> Result<()> {
    store.save(dir).with_context(|| format!("writing checkpoint {}", dir.display()))?;
    fs::write(dir.join(CHECKPOINT_GRAPH), g.to_edge_list())?;
    Ok(())
}

fn load_checkpoint(dir: &Path) -> Result<(DynamicGraph, CheckpointStore)> {
    let store = CheckpointStore::load(dir).with_context(|| format!("reading checkpoint {}", dir.display()))?;
    let edges = parse_edge_list(&read_text(&dir.join(CHECKPOINT_GRAPH))?)?;
    // Stored edges are already directed.
    let g = DynamicGraph::from_edges(store.num_nodes(), edges, Default::default())?;
    Ok((g, store))
}

pub fn gen(a: &GenArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.insert_fraction) {
        bail!("--insert-fraction must lie in [0, 1]");
    }
    let cfg = SyntheticConfig {
        insert_fraction: a.insert_fraction,
        ..SyntheticConfig::new(a.nodes, a.avg_degree, a.feature_len, a.stream_len, a.seed)
    };
    let data = generate(&cfg)?;
    data.write(&a.out)?;
    if let Some(kind) = a.model {
        let model = BuiltinConfig::new(kind.into(), a.layers, a.feature_len, a.hidden).with_epsilon(a.epsilon);
        fs::write(a.out.join("model.txt"), model.description())?;
        model.random_weights(a.seed).save(a.out.join("weights"), "weights.txt")?;
    }
    Ok(())
}

pub fn init(a: &InitArgs) -> Result<()> {
    let features = load_features(&a.features)?;
    let model = load_model(&a.model, features.cols())?;
    let edges = parse_edge_list(&read_text(&a.graph)?)
        .with_context(|| format!("parsing {}", a.graph.display()))?;
    let g = DynamicGraph::from_edges(features.rows(), edges, a.direction.into())?;
    let store = CheckpointStore::init_full_inference(&g, &features, &model)?;
    save_checkpoint(&a.out, &g, &store)
}

pub fn stream(a: &StreamArgs) -> Result<()> {
    let (g, store) = load_checkpoint(&a.checkpoint)?;
    let features = match &a.features {
        Some(p) => Some(load_features(p)?),
        None if a.verify != VerifyMode::Off || a.compare_baseline => {
            bail!("--features is required with --verify or --compare-baseline")
        }
        None => None,
    };
    let input_len = match &features {
        Some(f) => f.cols(),
        None => input_len_from_weights(&a.model, &store)?,
    };
    let model = load_model(&a.model, input_len)?;
    let deltas = parse_update_stream(&read_text(&a.stream)?, a.direction.into())
        .with_context(|| format!("parsing {}", a.stream.display()))?;
    let mut engine = Engine::from_parts(g, store, model)?;

    let mut out: Box<dyn Write> = match &a.stats_out {
        Some(p) => Box::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut prev = a.compare_baseline.then(|| Embeddings::from_store(engine.store()));
    for chunk in deltas.chunks(a.num_updates as usize) {
        let mut st = engine.process_update_round(chunk)?;
        let features = features.as_ref();
        if let (Some(prev), Some(x)) = (prev.as_mut(), features) {
            let aff = affected_inference(engine.graph(), chunk, x, engine.model(), prev)?;
            st.baseline_fetches = Some(aff.inference.fetches);
            *prev = aff.inference.embeddings;
        }
        writeln!(out, "{}", st.to_record())?;
        if a.verify == VerifyMode::EveryRound {
            out.flush()?;
            check_against_full(engine.graph(), engine.store(), features.unwrap(), engine.model(), Some(st.round))?;
        }
    }
    out.flush()?;
    if a.verify == VerifyMode::Final {
        check_against_full(engine.graph(), engine.store(), features.as_ref().unwrap(), engine.model(), None)?;
    }
    if let Some(dir) = &a.save {
        save_checkpoint(dir, engine.graph(), engine.store())?;
    }
    Ok(())
}

/// Without features, the input length is only needed for validation, and a
/// model whose first layer reads raw features has it as its message width.
fn input_len_from_weights(args: &ModelArgs, store: &CheckpointStore) -> Result<usize> {
    let spec = ModelSpec::parse(&read_text(&args.model)?)?;
    if spec.prefix_ops().is_empty() {
        return Ok(store.messages(0).cols());
    }
    let weights = WeightSet::load(&args.weights)?;
    match spec.prefix_ops().first() {
        Some(streamgnn_core::model::ModelOp::Linear { weight, .. }) => Ok(weights.matrix(weight)?.cols()),
        _ => bail!("cannot infer the input length of this model; pass --features"),
    }
}

pub fn report(a: &ReportArgs) -> Result<()> {
    for path in &a.stats {
        let rounds = parse_records(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))?;
        print!("{}", Report::from_rounds(&rounds).to_table(&path.display().to_string()));
    }
    Ok(())
}

pub fn verify(a: &VerifyArgs) -> Result<()> {
    let (g, store) = load_checkpoint(&a.checkpoint)?;
    let features = load_features(&a.features)?;
    let model = load_model(&a.model, features.cols())?;
    check_against_full(&g, &store, &features, &model, None)?;
    println!("checkpoint matches full inference");
    Ok(())
}
