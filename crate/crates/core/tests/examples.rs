//! Every example runs to completion.

macro_rules! example {
    ($name:ident) => {
        #[allow(dead_code)]
        mod $name {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", stringify!($name), ".rs"));
        }

        #[test]
        fn $name() {
            $name::run().expect(stringify!($name));
        }
    };
}

example!(evaluate);
example!(demand_lifecycle);
example!(transport_selection);
example!(threaded_cluster);
example!(wal_recovery);
example!(speaker_pipeline);
example!(replication);
example!(self_healing);
example!(run_report);
