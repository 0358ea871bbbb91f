//! The single TOML configuration file and the setup it describes.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, RoomType};
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::knowledge::{
    build_graph, build_partial_reward_matrix, load_embeddings, parse_aliases, parse_triples, shipped_reward_matrix,
    synth_embeddings, KnowledgeGraph, PartialRewardMatrix, BUILTIN_ALIASES, BUILTIN_TRIPLES,
};
use crate::model::ModelDims;
use crate::reward::RewardConfig;
use crate::rng::derive_seed;
use crate::task::TaskContext;
use crate::trainer::TrainConfig;
use crate::world::{generate_world_set, load_floorplan_dir, Split, WorldConfig, WorldSet};

/// Where the partial reward matrices come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMatrixSource {
    /// Counted from the training floorplans.
    Built,
    /// The tables bundled with the crate.
    Shipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnowledgeConfig {
    /// Relation triples file; the bundled triples when absent.
    pub triples: Option<PathBuf>,
    /// Alias file; the bundled aliases when absent.
    pub aliases: Option<PathBuf>,
    /// Word-vector file; deterministic synthetic vectors when absent.
    pub embeddings: Option<PathBuf>,
    /// Use co-occurrence counts instead of 0/1 edges.
    pub weighted: bool,
    pub reward_matrix: RewardMatrixSource,
    /// Pair distance, in meters, that counts as close when building M.
    pub closeness_radius: f64,
}

impl Default for KnowledgeConfig {
    fn default() -> Self {
        KnowledgeConfig {
            triples: None,
            aliases: None,
            embeddings: None,
            weighted: false,
            reward_matrix: RewardMatrixSource::Built,
            closeness_radius: 1.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    /// Seed for floorplan generation; derived from `seed` when absent.
    pub world_seed: Option<u64>,
    /// Load floorplans from this directory instead of generating them.
    pub floorplans: Option<PathBuf>,
    pub world: WorldConfig,
    pub knowledge: KnowledgeConfig,
    pub model: ModelDims,
    pub reward: RewardConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

const WORLD_STREAM: u64 = 0x0077_6f72_6c64;
const EMBED_STREAM: u64 = 0x0065_6d62_6564;

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.reward.validate()?;
        self.train.validate()?;
        if !(self.knowledge.closeness_radius > 0.0) {
            return Err(Error::Config("knowledge.closeness_radius must be positive".into()));
        }
        if self.eval.episodes_per_room == 0 {
            return Err(Error::Config("eval.episodes_per_room must be positive".into()));
        }
        let m = &self.model;
        if [m.embed_dim, m.h1, m.h2, m.h3, m.hidden].contains(&0) {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        Ok(())
    }

    pub fn world_seed(&self) -> u64 {
        self.world_seed.unwrap_or_else(|| derive_seed(self.seed, &[WORLD_STREAM]))
    }

    /// Training settings with the seed filled in.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train
        }
    }
}

pub fn load_knowledge_graph(cfg: &KnowledgeConfig, catalog: &Catalog) -> Result<KnowledgeGraph> {
    let triples = match &cfg.triples {
        Some(p) => parse_triples(&std::fs::read_to_string(p)?, &p.display().to_string())?,
        None => parse_triples(BUILTIN_TRIPLES, "bundled triples")?,
    };
    let aliases = match &cfg.aliases {
        Some(p) => parse_aliases(&std::fs::read_to_string(p)?, &p.display().to_string())?,
        None => parse_aliases(BUILTIN_ALIASES, "bundled aliases")?,
    };
    Ok(build_graph(&triples, &aliases, catalog, cfg.weighted))
}

/// Everything a run needs, built from a [`Config`].
#[derive(Debug)]
pub struct Setup {
    pub config: Config,
    pub world: WorldSet,
    pub graph: KnowledgeGraph,
    pub ctx: Arc<TaskContext>,
    pub dims: ModelDims,
}

impl Setup {
    pub fn build(config: &Config) -> Result<Setup> {
        config.validate()?;
        let catalog = Catalog::standard();
        let world = match &config.floorplans {
            Some(dir) => WorldSet::new(load_floorplan_dir(dir, &catalog)?),
            None => generate_world_set(config.world_seed(), &config.world, &catalog)?,
        };
        Self::with_world(config, catalog, world)
    }

    pub fn with_world(config: &Config, catalog: Catalog, world: WorldSet) -> Result<Setup> {
        config.validate()?;
        let graph = load_knowledge_graph(&config.knowledge, &catalog)?;
        let embeddings = match &config.knowledge.embeddings {
            Some(p) => load_embeddings(p, &catalog)?,
            None => synth_embeddings(derive_seed(config.seed, &[EMBED_STREAM]), config.model.embed_dim, &catalog)?,
        };
        let matrices = RoomType::ALL
            .iter()
            .map(|&room| reward_matrix(config, &catalog, &world, room))
            .collect::<Result<Vec<_>>>()?;
        let dims = ModelDims {
            nodes: catalog.len(),
            embed_dim: embeddings.dim,
            ..config.model
        };
        let ctx = TaskContext::new(
            catalog,
            config.world.detector.clone(),
            embeddings,
            &graph,
            matrices,
            config.reward,
            config.train.max_steps,
        )?;
        Ok(Setup {
            config: config.clone(),
            world,
            graph,
            ctx,
            dims,
        })
    }
}

fn reward_matrix(config: &Config, catalog: &Catalog, world: &WorldSet, room: RoomType) -> Result<PartialRewardMatrix> {
    match config.knowledge.reward_matrix {
        RewardMatrixSource::Shipped => shipped_reward_matrix(room, catalog),
        RewardMatrixSource::Built => build_partial_reward_matrix(
            &world.split(room, Split::Train),
            room,
            config.knowledge.closeness_radius,
            catalog,
        ),
    }
}
