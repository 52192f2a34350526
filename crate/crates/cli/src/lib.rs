//! Library side of the `crowdmix` binary.

pub mod error;
pub mod render;
pub mod scenario;
pub mod script;

use std::fs;
use std::net::SocketAddr;
use std::path::Path;

use crowdmix_core::archive::{load_from_path, save_to_path};
use crowdmix_core::{BehaviorId, BlockId, SessionArchive};
use crowdmix_server::{Hub, HubConfig, SessionConfig};

pub use error::{exit, CliError};
pub use render::Format;
pub use scenario::Report;

pub fn load(path: &Path) -> Result<SessionArchive, CliError> {
    load_from_path(path).map_err(CliError::load(path))
}

pub fn save(archive: &SessionArchive, path: &Path) -> Result<(), CliError> {
    save_to_path(archive, path, false).map_err(CliError::load(path))
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(CliError::io(path))
}

/// `remix`: returns the ids of the new blocks.
pub fn remix(session: &Path, script: &Path, out: &Path, tick: f64) -> Result<Vec<BlockId>, CliError> {
    let archive = load(session)?;
    let lines = script::parse_script(&read(script)?)?;
    let (updated, produced) = script::run_script(&archive, &lines, tick)?;
    save(&updated, out)?;
    Ok(produced)
}

/// `render`: returns the number of frames written.
pub fn render(session: &Path, behavior: &BehaviorId, out: &Path, format: Format, tick: Option<f64>) -> Result<usize, CliError> {
    let archive = load(session)?;
    let frames = render::frames(&archive, behavior, tick)?;
    render::write(&frames, out, format)?;
    Ok(frames.len())
}

/// `simulate`: fails with [`CliError::AssertionsFailed`] after writing
/// `save` (if given) when any check fails.
pub fn simulate(scenario: &Path, seed: Option<u64>, save_to: Option<&Path>) -> Result<Report, CliError> {
    let sc = scenario::parse(&read(scenario)?)?;
    let out = scenario::run(&sc, seed)?;
    if let Some(p) = save_to {
        save(&out.archive, p)?;
    }
    Ok(out.report)
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub addr: SocketAddr,
    pub lock_ttl_ms: u64,
    pub tick_ms: u64,
    pub session_ttl_ms: Option<u64>,
    pub load: Option<(String, SessionArchive)>,
}

pub fn serve(opts: ServeOptions) -> Result<(), CliError> {
    let config = HubConfig {
        session: SessionConfig { lock_ttl_ms: opts.lock_ttl_ms, tick_ms: opts.tick_ms, ..SessionConfig::default() },
        session_ttl_ms: opts.session_ttl_ms,
        ..HubConfig::default()
    };
    let mut hub = Hub::new(config);
    if let Some((id, archive)) = opts.load {
        hub.load_session(&id, archive, 0);
    }
    let rt = tokio::runtime::Runtime::new().map_err(CliError::Serve)?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(opts.addr).await.map_err(CliError::Serve)?;
        crowdmix_server::ws::serve(listener, hub).await.map_err(CliError::Serve)
    })
}
