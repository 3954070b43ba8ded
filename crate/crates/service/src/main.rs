use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::Parser;
use kuramoto_oed::io::read_json;
use kuramoto_oed::surrogate::SurrogateClassifier;
use kuramoto_oed_service::{router, Store};

/// Serves live experimental-design campaigns under /v1.
#[derive(Parser, Debug)]
#[command(name = "campaign-service", version)]
struct Args {
    #[arg(long, default_value = "127.0.0.1:8080", env = "CAMPAIGN_SERVICE_ADDR")]
    addr: SocketAddr,
    /// Directory holding one event log per campaign.
    #[arg(long, default_value = "campaigns")]
    data_dir: PathBuf,
    /// Built dashboard bundle to serve outside /v1.
    #[arg(long)]
    static_dir: Option<PathBuf>,
    /// Trained classifiers for the ml backend (matched by oscillator count).
    #[arg(long)]
    model: Vec<PathBuf>,
    /// Worker threads for estimation jobs.
    #[arg(long, env = "KURAMOTO_OED_THREADS")]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match serve(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn serve(args: Args) -> Result<(), Box<dyn std::error::Error>> {
    if let Some(threads) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()?;
    }
    let mut models = Vec::new();
    for path in &args.model {
        let model: SurrogateClassifier = read_json(path)?;
        model.validate()?;
        models.push(Arc::new(model));
    }
    let store = Store::open(&args.data_dir, models)?;
    let app = router(store, args.static_dir);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(args.addr).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })?;
    Ok(())
}
