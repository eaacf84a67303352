use crate::actor_critic::{ModelConfig, PolicyNet, ValueNet};
use crate::diff::checkpoint::{decode_binary, encode_binary};
use crate::diff::{DiffError, ParamStore};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

const MAGIC: &[u8; 8] = b"GPPAGNT\0";

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("agent checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Diff(#[from] DiffError),
}

/// Actor and critic networks with their parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Agent {
    pub config: ModelConfig,
    pub policy: PolicyNet,
    pub value: ValueNet,
    pub actor: ParamStore<f64>,
    pub critic: ParamStore<f64>,
}

impl Agent {
    pub fn new(config: ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut actor = ParamStore::new();
        let policy = PolicyNet::new(&mut actor, &config, &mut rng);
        let mut critic = ParamStore::new();
        let value = ValueNet::new(&mut critic, &config, &mut rng);
        Self {
            config,
            policy,
            value,
            actor,
            critic,
        }
    }

    /// `magic | u32 config length | config JSON | u64 actor length | actor | critic`,
    /// integers little-endian, parameter blocks in the checkpoint format.
    pub fn to_bytes(&self) -> Vec<u8> {
        let cfg = serde_json::to_vec(&self.config).expect("config serializes");
        let actor = encode_binary(&self.actor);
        let critic = encode_binary(&self.critic);
        let mut out = Vec::with_capacity(24 + cfg.len() + actor.len() + critic.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
        out.extend_from_slice(&cfg);
        out.extend_from_slice(&(actor.len() as u64).to_le_bytes());
        out.extend_from_slice(&actor);
        out.extend_from_slice(&critic);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AgentError> {
        let bad = |m: &str| AgentError::Format(m.to_string());
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(bad("missing magic header"));
        }
        let cfg_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let rest = &bytes[12..];
        if rest.len() < cfg_len + 8 {
            return Err(bad("truncated config"));
        }
        let config: ModelConfig =
            serde_json::from_slice(&rest[..cfg_len]).map_err(|e| AgentError::Format(e.to_string()))?;
        let rest = &rest[cfg_len..];
        let actor_len = u64::from_le_bytes(rest[..8].try_into().unwrap()) as usize;
        let rest = &rest[8..];
        if rest.len() < actor_len {
            return Err(bad("truncated actor block"));
        }
        let actor = decode_binary(&rest[..actor_len])?;
        let critic = decode_binary(&rest[actor_len..])?;
        // layout comes from the config; values from the file
        let mut agent = Agent::new(config, 0);
        agent.actor.check_same_layout(&actor)?;
        agent.critic.check_same_layout(&critic)?;
        agent.actor = actor;
        agent.critic = critic;
        Ok(agent)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, AgentError> {
        let bytes = std::fs::read(path).map_err(|e| AgentError::Format(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}
