use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use colex_core::analysis::{analyze_dataset, load_dataset, AnalysisOptions, DyadStatus};
use colex_core::engine::{DyadLog, EventKind, RoundPhase};
use colex_core::Player;
use colex_server::hub::Tx;
use colex_server::protocol::{ClientEvent, Outbound};
use colex_server::store::Recovery;
use colex_server::{ExperimentConfig, Hub, HubError};
use tokio::sync::mpsc::{unbounded_channel, UnboundedReceiver};

fn config(dir: &Path) -> ExperimentConfig {
    ExperimentConfig {
        port: 0,
        admin_token: "s3cret".into(),
        data_dir: dir.to_path_buf(),
        seed: Some(5),
        fsync: false,
        dropout_timeout_secs: 60,
        round_timeout_secs: 20,
        ..Default::default()
    }
}

struct Pair {
    dyad: String,
    tokens: [String; 2],
    rx: [UnboundedReceiver<Outbound>; 2],
    _tx: [Tx; 2],
}

impl Pair {
    fn drain(&mut self, p: Player) -> Vec<Outbound> {
        let rx = &mut self.rx[p as usize];
        std::iter::from_fn(|| rx.try_recv().ok()).collect()
    }

    fn token(&self, p: Player) -> &str {
        &self.tokens[p as usize]
    }
}

async fn pair(hub: &Arc<Hub>) -> Pair {
    let a = hub.join(true).unwrap();
    assert!(a.dyad.is_none());
    let b = hub.join(true).unwrap();
    let (ta, ra) = unbounded_channel();
    let (tb, rb) = unbounded_channel();
    hub.connect(&a.token, ta.clone()).await.unwrap();
    hub.connect(&b.token, tb.clone()).await.unwrap();
    Pair {
        dyad: b.dyad.unwrap(),
        tokens: [a.token, b.token],
        rx: [ra, rb],
        _tx: [ta, tb],
    }
}

async fn log_of(hub: &Hub, dyad: &str) -> DyadLog {
    hub.dyad(dyad).unwrap().lock().await.game.log.clone()
}

/// Plays the current round with correct guesses.
async fn play_round(hub: &Arc<Hub>, p: &Pair) {
    let (round, sender, prompt, signal) = {
        let rt = hub.dyad(&p.dyad).unwrap();
        let rt = rt.lock().await;
        let st = &rt.game.state;
        (
            st.round,
            st.current_sender(),
            st.current_trial().unwrap().prompt.clone(),
            st.stimulus.signal_set.signals[0].clone(),
        )
    };
    let ev = |e| hub.handle(p.token(sender), e);
    ev(ClientEvent::Send {
        round,
        signal: signal.as_str().into(),
    })
    .await
    .unwrap();
    hub.handle(
        p.token(sender.other()),
        ClientEvent::Guess {
            round,
            meaning: prompt.as_str().into(),
        },
    )
    .await
    .unwrap();
    for pl in [Player::A, Player::B] {
        hub.handle(p.token(pl), ClientEvent::Advance { round }).await.unwrap();
    }
}

#[tokio::test]
async fn lobby_pairs_two_joins() {
    let dir = tempfile::tempdir().unwrap();
    let hub = Hub::open(config(dir.path())).unwrap();
    assert!(matches!(hub.join(false), Err(HubError::ConsentRequired)));
    let a = hub.join(true).unwrap();
    assert_eq!((a.dyad.clone(), a.role), (None, None));
    assert_eq!(hub.health().await.waiting, 1);
    assert_eq!(hub.health().await.dyads_total, 0);

    let (tx, mut rx) = unbounded_channel();
    hub.connect(&a.token, tx).await.unwrap();
    assert_eq!(rx.try_recv().unwrap().kind, "waiting");

    let b = hub.join(true).unwrap();
    assert_eq!(b.role, Some(Player::B));
    assert_eq!(hub.session(&a.token).unwrap(), (b.dyad.clone(), Some(Player::A)));
    // The waiting player hears about the pairing right away.
    assert_eq!(rx.try_recv().unwrap().kind, "view");
    assert_eq!(hub.health().await.dyads_total, 1);
    assert!(dir.path().join(b.dyad.unwrap()).join("stimulus.json").is_file());
}

#[tokio::test]
async fn send_reaches_receiver_and_wrong_player_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let hub = Hub::open(config(dir.path())).unwrap();
    let mut p = pair(&hub).await;
    p.drain(Player::A);
    p.drain(Player::B);
    let rt = hub.dyad(&p.dyad).unwrap();
    let (sender, signal) = {
        let rt = rt.lock().await;
        (rt.game.state.current_sender(), rt.game.state.stimulus.signal_set.signals[2].clone())
    };
    let receiver = sender.other();

    hub.handle(p.token(sender), ClientEvent::Send { round: 1, signal: signal.as_str().into() })
        .await
        .unwrap();
    let got = p.drain(receiver);
    assert_eq!(got.len(), 1);
    assert_eq!(got[0].kind, "view");
    assert_eq!(got[0].payload["phase"], "awaiting_guess");
    assert_eq!(got[0].payload["signal"], signal.as_str());
    assert!(got[0].payload["prompt"].is_null());
    p.drain(sender);

    let before = log_of(&hub, &p.dyad).await;
    let meaning = rt.lock().await.game.state.current_trial().unwrap().prompt.clone();
    hub.handle(p.token(sender), ClientEvent::Guess { round: 1, meaning: meaning.as_str().into() })
        .await
        .unwrap();
    let err = p.drain(sender);
    assert_eq!(err.len(), 1);
    assert_eq!(err[0].kind, "error");
    assert_eq!(err[0].payload["code"], "wrong_player");
    assert!(p.drain(receiver).is_empty());
    assert_eq!(log_of(&hub, &p.dyad).await, before);
    assert_eq!(rt.lock().await.game.state.phase, RoundPhase::AwaitingGuess);
}

#[tokio::test]
async fn duplicates_and_stale_events_are_ignored() {
    let dir = tempfile::tempdir().unwrap();
    let hub = Hub::open(config(dir.path())).unwrap();
    let p = pair(&hub).await;
    let rt = hub.dyad(&p.dyad).unwrap();
    let (sender, signals, prompt) = {
        let rt = rt.lock().await;
        let st = &rt.game.state;
        (st.current_sender(), st.stimulus.signal_set.signals.clone(), st.current_trial().unwrap().prompt.clone())
    };
    for s in [&signals[0], &signals[0], &signals[1]] {
        hub.handle(p.token(sender), ClientEvent::Send { round: 1, signal: s.as_str().into() })
            .await
            .unwrap();
    }
    for _ in 0..2 {
        hub.handle(p.token(sender.other()), ClientEvent::Guess { round: 1, meaning: prompt.as_str().into() })
            .await
            .unwrap();
    }
    for _ in 0..3 {
        hub.handle(p.token(sender), ClientEvent::Advance { round: 1 }).await.unwrap();
    }
    assert_eq!(rt.lock().await.game.state.round, 1);
    hub.handle(p.token(sender.other()), ClientEvent::Advance { round: 1 }).await.unwrap();
    hub.handle(p.token(sender.other()), ClientEvent::Advance { round: 1 }).await.unwrap();
    // A late copy of round 1's send.
    hub.handle(p.token(sender), ClientEvent::Send { round: 1, signal: signals[0].as_str().into() })
        .await
        .unwrap();

    let log = log_of(&hub, &p.dyad).await;
    let count = |k: EventKind| log.events.iter().filter(|e| e.event == k).count();
    assert_eq!((count(EventKind::Send), count(EventKind::Guess), count(EventKind::Advance)), (1, 1, 1));
    assert_eq!(rt.lock().await.game.state.round, 2);
    let on_disk = fs::read_to_string(dir.path().join(&p.dyad).join("log.jsonl")).unwrap();
    assert_eq!(on_disk, log.to_jsonl());
}

#[tokio::test]
async fn feedback_screen_times_out() {
    let dir = tempfile::tempdir().unwrap();
    let hub = Hub::open(ExperimentConfig {
        feedback_secs: 0,
        ..config(dir.path())
    })
    .unwrap();
    let p = pair(&hub).await;
    let rt = hub.dyad(&p.dyad).unwrap();
    let (sender, signal, prompt) = {
        let rt = rt.lock().await;
        let st = &rt.game.state;
        (st.current_sender(), st.stimulus.signal_set.signals[0].clone(), st.current_trial().unwrap().prompt.clone())
    };
    hub.handle(p.token(sender), ClientEvent::Send { round: 1, signal: signal.as_str().into() })
        .await
        .unwrap();
    hub.handle(p.token(sender.other()), ClientEvent::Guess { round: 1, meaning: prompt.as_str().into() })
        .await
        .unwrap();
    for _ in 0..100 {
        if rt.lock().await.game.state.round == 2 {
            return;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    panic!("feedback screen never closed");
}

#[tokio::test]
async fn slow_players_are_nudged_once() {
    let dir = tempfile::tempdir().unwrap();
    let hub = Hub::open(config(dir.path())).unwrap();
    let mut p = pair(&hub).await;
    p.drain(Player::A);
    p.drain(Player::B);
    let sender = hub.dyad(&p.dyad).unwrap().lock().await.game.state.current_sender();
    assert!(hub.dropout_sweep(Instant::now() + Duration::from_secs(30)).await.is_empty());
    assert_eq!(p.drain(sender).iter().map(|o| o.kind).collect::<Vec<_>>(), ["timeout"]);
    assert!(p.drain(sender.other()).is_empty());
    assert!(hub.dropout_sweep(Instant::now() + Duration::from_secs(31)).await.is_empty());
    assert!(p.drain(sender).is_empty());
}

#[tokio::test]
async fn idle_dyads_are_closed_and_excluded() {
    let dir = tempfile::tempdir().unwrap();
    let hub = Hub::open(ExperimentConfig {
        dropout_timeout_secs: 1,
        round_timeout_secs: 1,
        ..config(dir.path())
    })
    .unwrap();
    let mut idle = pair(&hub).await;
    let busy = pair(&hub).await;
    assert!(hub.dropout_sweep(Instant::now()).await.is_empty());
    let sender = hub.dyad(&idle.dyad).unwrap().lock().await.game.state.current_sender();

    tokio::time::sleep(Duration::from_millis(2100)).await;
    for _ in 0..3 {
        play_round(&hub, &busy).await;
    }
    idle.drain(Player::A);
    idle.drain(Player::B);
    assert_eq!(hub.dropout_sweep(Instant::now()).await, [idle.dyad.clone()]);
    for pl in [Player::A, Player::B] {
        let got = idle.drain(pl);
        assert_eq!(got.last().unwrap().kind, "abandoned");
        assert_eq!(got.last().unwrap().payload["reason"], "timeout");
    }
    let log = log_of(&hub, &idle.dyad).await;
    assert!(log.is_withdrawn());
    let e = log.events.last().unwrap();
    assert_eq!((e.event, e.player), (EventKind::Dropout, Some(sender)));
    assert!(!hub.dyad(&busy.dyad).unwrap().lock().await.is_closed());

    // Later events are refused.
    hub.handle(idle.token(sender), ClientEvent::Send { round: 1, signal: "x".into() })
        .await
        .unwrap();
    assert_eq!(idle.drain(sender)[0].payload["code"], "abandoned");

    let records = load_dataset(dir.path()).unwrap();
    let report = analyze_dataset(&records, &AnalysisOptions::default());
    let s = report.summaries.iter().find(|s| s.dyad == idle.dyad).unwrap();
    assert_eq!(s.status, DyadStatus::Withdrawn);
    assert!(!s.included);
    assert!(report.cases.iter().all(|c| c.dyad != idle.dyad));
}

#[tokio::test]
async fn restart_closes_in_flight_dyads() {
    let dir = tempfile::tempdir().unwrap();
    let (done, running) = {
        let hub = Hub::open(config(dir.path())).unwrap();
        let done = pair(&hub).await;
        while !hub.dyad(&done.dyad).unwrap().lock().await.game.state.is_finished() {
            play_round(&hub, &done).await;
        }
        let running = pair(&hub).await;
        for _ in 0..10 {
            play_round(&hub, &running).await;
        }
        (done.dyad, running.dyad)
    };
    let done_bytes = fs::read(dir.path().join(&done).join("log.jsonl")).unwrap();
    // Simulate a crash in the middle of an append.
    let running_log = dir.path().join(&running).join("log.jsonl");
    let mut text = fs::read_to_string(&running_log).unwrap();
    text.push_str("{\"event\":\"se");
    fs::write(&running_log, text).unwrap();

    let hub = Hub::open(config(dir.path())).unwrap();
    assert_eq!(
        hub.recovered(),
        [(done.clone(), Recovery::Complete), (running.clone(), Recovery::MarkedAbandoned)]
    );
    assert_eq!(fs::read(dir.path().join(&done).join("log.jsonl")).unwrap(), done_bytes);
    let log = DyadLog::load(&running_log).unwrap().unwrap();
    let last = log.events.last().unwrap();
    assert_eq!(last.event, EventKind::Dropout);
    assert_eq!(last.payload["reason"], "server_restart");
    assert_eq!(log.rounds().len(), 10);

    let next = hub.join(true).unwrap();
    assert!(next.dyad.is_none());
    let b = hub.join(true).unwrap();
    assert_eq!(b.dyad.as_deref(), Some("dyad-0003"));

    // A second restart changes nothing.
    drop(hub);
    let hub = Hub::open(config(dir.path())).unwrap();
    assert_eq!(hub.recovered()[1], (running, Recovery::Withdrawn));
}

#[tokio::test]
async fn export_is_deterministic_and_guarded() {
    let dir = tempfile::tempdir().unwrap();
    let hub = Hub::open(config(dir.path())).unwrap();
    let p = pair(&hub).await;
    play_round(&hub, &p).await;
    hub.submit_feedback(p.token(Player::A), "enjoyed it", true).unwrap();
    assert!(matches!(hub.export(Some("nope")).await, Err(HubError::Forbidden)));
    assert!(matches!(hub.export(None).await, Err(HubError::Forbidden)));
    let a = hub.export(Some("s3cret")).await.unwrap();
    let b = hub.export(Some("s3cret")).await.unwrap();
    assert_eq!(a, b);

    let mut archive = tar::Archive::new(a.as_slice());
    let names: Vec<String> = archive
        .entries()
        .unwrap()
        .map(|e| e.unwrap().path().unwrap().to_string_lossy().to_string())
        .collect();
    let d = &p.dyad;
    assert_eq!(
        names,
        [
            "config.toml".to_string(),
            "feedback.jsonl".into(),
            format!("{d}/"),
            format!("{d}/log.jsonl"),
            format!("{d}/schedule.json"),
            format!("{d}/stimulus.json"),
        ]
    );
    let mut archive = tar::Archive::new(a.as_slice());
    for e in archive.entries().unwrap() {
        let mut e = e.unwrap();
        let mut s = String::new();
        std::io::Read::read_to_string(&mut e, &mut s).unwrap();
        assert!(!s.contains("s3cret"));
        if e.path().unwrap().ends_with("feedback.jsonl") {
            let v: serde_json::Value = serde_json::from_str(s.trim()).unwrap();
            assert_eq!(v["dyad"], d.as_str());
            assert_eq!(v["role"], "A");
            assert_eq!(v["took_notes"], true);
        }
    }

    let disabled = Hub::open(ExperimentConfig {
        admin_token: String::new(),
        ..config(dir.path())
    })
    .unwrap();
    assert!(matches!(disabled.export(Some("")).await, Err(HubError::Forbidden)));
}
