pub mod audit;
pub mod hub;
pub mod locks;
pub mod loopback;
pub mod mirror;
pub mod protocol;
pub mod session;
pub mod ws;

pub use hub::{ConnId, Hub, HubConfig};
pub use locks::{Activity, LockTable, Scope};
pub use loopback::Loopback;
pub use mirror::Mirror;
pub use protocol::{ClientMessage, ServerMessage};
pub use session::{Session, SessionConfig, SessionError};
