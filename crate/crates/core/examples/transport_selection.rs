// A dispatcher with two transports to one store host: it settles on the
// faster one and fails over when that one goes away.

use std::error::Error;
use std::sync::Arc;

use eduction::fabric::{
    Demand, DemandKind, DemandStore, Dispatcher, InProcEndpoint, InProcTransport, Signature, StoreHost, TcpEndpoint,
    TcpTransport, TransportAgent,
};

pub fn run() -> Result<(), Box<dyn Error>> {
    let host = StoreHost::new(Arc::new(DemandStore::new()));
    let inproc = InProcEndpoint::spawn(host.clone());
    let mut tcp = TcpEndpoint::bind(host, "127.0.0.1:0")?;

    let fast = Arc::new(TransportAgent::new("inproc", Box::new(InProcTransport::connect(&inproc))).with_modeled_latency(80));
    let slow = Arc::new(TransportAgent::new("tcp", Box::new(TcpTransport::new(tcp.local_addr()))).with_modeled_latency(5000));
    let d = Dispatcher::new("client", vec![slow, fast.clone()]);

    for i in 0..10u8 {
        d.send_demand(&Demand::new(Signature::for_stage("x", &[i]), DemandKind::Procedural, vec![i], "client"))?;
    }
    println!("active after 10 requests: {}", d.active().ok_or("none")?.name());

    fast.set_down(true);
    d.send_demand(&Demand::new("x:after", DemandKind::Procedural, vec![], "client"))?;
    println!("active after failure: {}", d.active().ok_or("none")?.name());
    for s in d.switches() {
        println!("switch {:?} -> {} ({:?})", s.from, s.to, s.reason);
    }
    for a in d.agents() {
        println!(
            "{:<7} modeled {:?}us, measured {:?}",
            a.name(),
            a.modeled_latency(),
            a.measured_latency()
        );
    }
    tcp.shutdown();
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
