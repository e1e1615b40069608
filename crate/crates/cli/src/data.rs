use anyhow::{bail, Context, Result};
use scgfm::graph::{load_json_graphs, load_tu_dataset, ppr_subgraph, two_topology_corpus, CorpusSpec, Graph, PprConfig};

use crate::args::{DataArgs, DataFormat};

pub fn load(args: &DataArgs) -> Result<Vec<Graph>> {
    let graphs = match args.format {
        DataFormat::Synthetic => two_topology_corpus(CorpusSpec {
            graphs: args.synthetic_graphs,
            min_nodes: args.synthetic_min_nodes,
            max_nodes: args.synthetic_max_nodes,
            seed: args.synthetic_seed,
        })?,
        DataFormat::Tu | DataFormat::Json => {
            let Some(path) = &args.data else {
                bail!("--data is required for the {:?} format", args.format);
            };
            let loaded = if args.format == DataFormat::Tu {
                load_tu_dataset(path)
            } else {
                load_json_graphs(path)
            };
            loaded.with_context(|| format!("loading {}", path.display()))?
        }
    };
    if graphs.is_empty() {
        bail!("dataset is empty");
    }
    match args.ego_cap {
        None => Ok(graphs),
        Some(cap) => {
            let cfg = PprConfig { cap, ..PprConfig::default() };
            let mut out = Vec::new();
            for g in &graphs {
                for center in 0..g.node_count() {
                    out.push(ppr_subgraph(g, center, cfg)?);
                }
            }
            Ok(out)
        }
    }
}
