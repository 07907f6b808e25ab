use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::to_canonical_string;
use crate::config::{load_config, Config, ConfigError};
use crate::crypto::SecretKey;
use crate::ledger::{load_blocks, save_chain, validate_blocks, LedgerError};
use crate::model::{generate_dataset, load_weights, save_weights, EntityMetadata, FormatError};
use crate::storage::{Storage, StorageError};

use super::{identities, runtime_rng, UserEntry, World};

pub const CONFIG_FILE: &str = "world.conf";
pub const STORAGE_FILE: &str = "storage.json";
pub const RUNTIME_FILE: &str = "runtime.json";

#[derive(Debug, Error)]
pub enum PersistError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Weights(#[from] FormatError),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error("{path}: {reason}")]
    File { path: PathBuf, reason: String },
    #[error("state directory is inconsistent: {0}")]
    Mismatch(String),
}

#[derive(Serialize, Deserialize)]
struct ExtraUser {
    secret: String,
    metadata: EntityMetadata,
}

/// World state not covered by the chain, storage, or seed.
#[derive(Serialize, Deserialize)]
struct Runtime {
    clock: u64,
    rng_word_pos: u128,
    extra_users: Vec<ExtraUser>,
}

fn write(path: &Path, text: impl AsRef<[u8]>) -> Result<(), PersistError> {
    std::fs::write(path, text).map_err(|e| PersistError::File {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn read(path: &Path) -> Result<String, PersistError> {
    std::fs::read_to_string(path).map_err(|e| PersistError::File {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Write every file needed to resume `world` into `dir`.
pub fn save_world(world: &World, dir: impl AsRef<Path>) -> Result<(), PersistError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| PersistError::File {
        path: dir.to_path_buf(),
        reason: e.to_string(),
    })?;
    let c = &world.config;
    write(&dir.join(CONFIG_FILE), c.to_text())?;
    save_chain(&world.chain, dir.join(&c.chain_file))?;
    save_weights(&world.model, dir.join(&c.weights_file))?;
    write(&dir.join(&c.log_file), world.export_log())?;
    write(&dir.join(STORAGE_FILE), to_canonical_string(&world.storage.state()))?;
    let runtime = Runtime {
        clock: world.clock,
        rng_word_pos: world.rng.get_word_pos(),
        extra_users: world
            .users
            .iter()
            .filter(|u| !u.registered)
            .map(|u| ExtraUser {
                secret: u.keys.secret.to_hex(),
                metadata: u.metadata,
            })
            .collect(),
    };
    write(&dir.join(RUNTIME_FILE), to_canonical_string(&runtime))
}

pub fn load_world(dir: impl AsRef<Path>) -> Result<World, PersistError> {
    let dir = dir.as_ref();
    let config: Config = load_config(dir.join(CONFIG_FILE))?;
    let dataset = generate_dataset(config.n_users, config.n_resources, config.seed);
    let ids = identities(&config, &dataset);
    let model = load_weights(dir.join(&config.weights_file))?;
    let chain = validate_blocks(&load_blocks(dir.join(&config.chain_file))?)?;

    let authority = chain.authority();
    if authority.admin_pk != ids.admin.public
        || authority.storage_pk != ids.storage.public
        || authority.validators != ids.validators.iter().map(|k| k.public).collect::<Vec<_>>()
    {
        return Err(PersistError::Mismatch("chain authority differs from the configured seed".into()));
    }

    let state = serde_json::from_str(&read(&dir.join(STORAGE_FILE))?).map_err(|e| PersistError::File {
        path: dir.join(STORAGE_FILE),
        reason: e.to_string(),
    })?;
    let storage = Storage::restore(ids.storage, config.storage_params(), state)?;
    if storage.log().root() != super::World::root_from_chain(&chain) {
        return Err(PersistError::Mismatch("storage log root differs from the chain mirror".into()));
    }

    let runtime: Runtime =
        serde_json::from_str(&read(&dir.join(RUNTIME_FILE))?).map_err(|e| PersistError::File {
            path: dir.join(RUNTIME_FILE),
            reason: e.to_string(),
        })?;
    let mut users = ids.users;
    for extra in runtime.extra_users {
        let secret = SecretKey::from_hex(&extra.secret)
            .map_err(|e| PersistError::Mismatch(format!("extra user key: {e}")))?;
        users.push(UserEntry {
            keys: crate::crypto::KeyPair {
                public: secret.public_key(),
                secret,
            },
            metadata: extra.metadata,
            registered: false,
        });
    }
    let mut rng = runtime_rng(config.seed);
    rng.set_word_pos(runtime.rng_word_pos);
    Ok(World {
        config,
        chain,
        validators: ids.validators,
        admin: ids.admin,
        storage,
        model,
        dataset,
        users,
        clock: runtime.clock,
        rng,
    })
}
