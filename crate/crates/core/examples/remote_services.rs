//! Starts the mock HTTP services and runs the same message with every stage
//! local and with every stage remote.

use lam_msc::pipeline::{Backend, Estimator, Message, Pipeline, PipelineConfig};
use lam_msc::remote::Endpoint;
use lam_msc::server::{MockConfig, MockServer};

fn main() -> anyhow::Result<()> {
    let server = MockServer::start("127.0.0.1:0", MockConfig::default())?;
    let ep = Endpoint::new(server.base_url());
    println!("mock services on {}", server.base_url());

    let local = PipelineConfig {
        estimators: vec![Estimator::Ls],
        lkb_enabled: false,
        ..PipelineConfig::default()
    };
    let mut remote = local.clone();
    remote.backends.mma = Backend::Remote;
    remote.backends.lkb = Backend::Remote;
    remote.backends.embed = Backend::Remote;
    remote.endpoints.mma = Some(ep.clone());
    remote.endpoints.lkb = Some(ep.clone());
    remote.endpoints.embed = Some(ep);

    let message = Message::Text("A dog with brown fur in a running pose. The background is a beach.".into());
    for (name, cfg) in [("local", local), ("remote", remote)] {
        let rec = Pipeline::with_model(cfg, None)?.run(&message, 15.0, Estimator::Ls, 0);
        println!("{name:>6}: cosine {:.4}  recovered {:?}", rec.cosine, rec.recovered);
    }
    println!("requests served: {}", server.request_count());
    Ok(())
}
