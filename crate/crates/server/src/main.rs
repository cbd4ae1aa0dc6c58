use examlab_server::{router, AppState, ServerConfig};

#[tokio::main]
async fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let config = match ServerConfig::from_env() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("configuration error: {e}");
            std::process::exit(2);
        }
    };
    if config.salt.is_none() {
        log::warn!("EXAMLAB_SALT is unset; student keys use the built-in default salt");
    }
    if config.admin_token.is_none() {
        log::warn!("EXAMLAB_ADMIN_TOKEN is unset; admin routes are disabled");
    }
    let platform = match config.open_platform() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("cannot open platform: {e}");
            std::process::exit(2);
        }
    };
    let app = router(
        AppState::new(platform, config.admin_token.clone()),
        config.ui_origin.as_deref(),
    );
    let listener = match tokio::net::TcpListener::bind(config.bind).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("cannot bind {}: {e}", config.bind);
            std::process::exit(2);
        }
    };
    log::info!("listening on {}", config.bind);
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    if let Err(e) = axum::serve(listener, app)
        .with_graceful_shutdown(shutdown)
        .await
    {
        eprintln!("server error: {e}");
        std::process::exit(1);
    }
}
