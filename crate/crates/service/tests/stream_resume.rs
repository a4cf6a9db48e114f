//! Reconnecting clients see every event exactly once, in order.

mod common;

use common::*;
use docent_core::fsm::{GazeTarget, InteractionState, UserEvent};
use proptest::prelude::*;

/// Produces a burst of outputs, then lets the session time out.
async fn drive(server: &Server, id: &str, rounds: usize) {
    let mut now = 0.0;
    for _ in 0..rounds {
        server.event(id, &UserEvent::GazeOn { target: GazeTarget::Character }).await;
        now += 0.3;
        server.event(id, &tick(now)).await;
        server.event(id, &UserEvent::GazeOff).await;
        now += 0.3;
        server.event(id, &tick(now)).await;
    }
    server.event(id, &UserEvent::GazeOn { target: GazeTarget::Character }).await;
    now += 4.5;
    server.event(id, &tick(now)).await;
    server.event(id, &UserEvent::GazeOff).await;
    loop {
        now += 0.5;
        if server.event(id, &tick(now)).await.state == InteractionState::Ended {
            break;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn resumed_streams_are_contiguous(
        rounds in 1usize..12,
        chunks in prop::collection::vec((1usize..6, any::<bool>()), 1..40),
    ) {
        let runtime = tokio::runtime::Runtime::new().unwrap();
        let seen = runtime.block_on(async {
            let server = start().await;
            let handle = server.create(garden("room1", false)).await;
            let id = handle.id.clone();
            let (seen, _) = tokio::join!(
                async {
                    let mut seen = Vec::new();
                    let mut plan = chunks.iter().cycle();
                    loop {
                        let (size, by_header) = *plan.next().unwrap();
                        let last = seen.last().map_or(0, |e: &docent_service::Sequenced| e.seq);
                        let part = if by_header && last > 0 {
                            server.read_stream(&id, "", Some(last), size).await
                        } else {
                            server.read_stream(&id, &format!("?from={}", last + 1), None, size).await
                        };
                        seen.extend(part);
                        if seen.last().is_some_and(|e| e.is_end()) {
                            break seen;
                        }
                    }
                },
                drive(&server, &id, rounds),
            );
            let total = server.history(&id).await.len();
            (seen, total)
        });
        let (seen, total) = seen;
        let seqs: Vec<u64> = seen.iter().map(|e| e.seq).collect();
        prop_assert_eq!(seqs, (1..=total as u64).collect::<Vec<_>>());
    }
}
