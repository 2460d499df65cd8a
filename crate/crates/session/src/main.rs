use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;

use anyhow::Result;
use clap::Parser;
use dsts_session::{router, AppState};

#[derive(Parser)]
#[command(name = "dsts-session", version, about = "Serve live preference sessions over HTTP")]
struct Args {
    #[arg(long, env = "DSTS_BIND", default_value = "127.0.0.1")]
    bind: IpAddr,
    #[arg(long, env = "DSTS_PORT", default_value_t = 8080)]
    port: u16,
    /// Where session snapshots are kept. In-memory only when absent.
    #[arg(long, env = "DSTS_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// Built UI bundle to serve at `/`.
    #[arg(long, env = "DSTS_STATIC_DIR")]
    static_dir: Option<PathBuf>,
}

#[tokio::main]
async fn main() -> Result<()> {
    tracing_subscriber::fmt().with_env_filter(tracing_subscriber::EnvFilter::from_default_env()).init();
    let args = Args::parse();
    let state = AppState::new(args.data_dir)?;
    let app = router(state, args.static_dir.as_deref());
    let addr = SocketAddr::new(args.bind, args.port);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on http://{addr}");
    axum::serve(listener, app).await?;
    Ok(())
}
