//! Gateway binary: `branchwm-gateway --config <path> [--bare]`.

use std::path::PathBuf;
use std::process::ExitCode;

use branchwm_gateway::{deploy, deploy_bare, GatewayConfig};

fn usage() -> ExitCode {
    eprintln!("usage: branchwm-gateway --config <path> [--bare]");
    ExitCode::from(2)
}

#[tokio::main]
async fn main() -> ExitCode {
    let mut config_path: Option<PathBuf> = None;
    let mut bare = false;
    let mut args = std::env::args().skip(1);
    while let Some(arg) = args.next() {
        match arg.as_str() {
            "--config" => match args.next() {
                Some(p) => config_path = Some(PathBuf::from(p)),
                None => return usage(),
            },
            "--bare" => bare = true,
            _ => return usage(),
        }
    }
    let Some(config_path) = config_path else {
        return usage();
    };
    let config = match GatewayConfig::load(&config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    let result = if bare {
        deploy_bare(&config).await
    } else {
        deploy(&config).await
    };
    match result {
        Ok(handle) => {
            println!("listening on {}", handle.addr);
            tokio::select! {
                _ = tokio::signal::ctrl_c() => {}
                _ = handle.join() => {}
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("startup error: {e}");
            ExitCode::from(2)
        }
    }
}
