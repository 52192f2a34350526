use std::time::Duration;

use crowdmix_core::{EditKind, Element};
use crowdmix_server::protocol::{ClientMessage, ServerMessage};
use crowdmix_server::ws::serve;
use crowdmix_server::{Hub, HubConfig};
use futures_util::{SinkExt, StreamExt};
use tokio::net::TcpListener;
use tokio_tungstenite::tungstenite::Message;

type Socket = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

async fn next(ws: &mut Socket) -> ServerMessage {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(5), ws.next()).await.expect("timed out").unwrap().unwrap();
        if let Message::Text(t) = msg {
            return ServerMessage::from_json(t.as_str()).unwrap();
        }
    }
}

async fn until(ws: &mut Socket, kind: &str) -> ServerMessage {
    loop {
        let m = next(ws).await;
        if m.to_value()["type"] == kind {
            return m;
        }
    }
}

#[tokio::test]
async fn two_clients_share_a_session() {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(serve(listener, Hub::new(HubConfig::default())));
    let url = format!("ws://{addr}/ws");

    let (mut a, _) = tokio_tungstenite::connect_async(&url).await.unwrap();
    let (mut b, _) = tokio_tungstenite::connect_async(&url).await.unwrap();
    a.send(Message::Text(r#"{"type":"join","sessionId":"s","workerId":"w1"}"#.into())).await.unwrap();
    assert!(matches!(next(&mut a).await, ServerMessage::Snapshot(_)));
    b.send(Message::Text(r#"{"type":"join","sessionId":"s","workerId":"w2"}"#.into())).await.unwrap();
    let ServerMessage::Snapshot(s) = next(&mut b).await else { panic!("expected snapshot") };
    assert_eq!(s.seq, 1);

    let edit = ClientMessage::Edit { edit: EditKind::Create(Element::shape("e1", 4.0, 4.0)), behavior_id: None };
    a.send(Message::Text(serde_json::to_string(&edit).unwrap().into())).await.unwrap();
    let on_a = until(&mut a, "editApplied").await;
    let on_b = until(&mut b, "editApplied").await;
    assert_eq!(on_a, on_b);
    assert_eq!(on_a.as_envelope().unwrap().seq, 3);

    b.send(Message::Text(r#"{"type":"fire","behaviorId":"bh1"}"#.into())).await.unwrap();
    let ServerMessage::Error(e) = until(&mut b, "error").await else { unreachable!() };
    assert_eq!(e.cause, "UnknownBehavior");

    b.close(None).await.unwrap();
    let gone = until(&mut a, "presenceUpdate").await;
    assert!(gone.as_envelope().unwrap().payload["presence"].is_null());
}
