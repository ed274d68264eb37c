//! Sidecar client against a stub server speaking the provider protocol.

mod common;

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use common::{unreachable_url, Request, Response, StubServer};
use shotmem::provider::http::SidecarClient;
use shotmem::provider::mock::{MockProvider, MOCK_EMBED_DIM};
use shotmem::provider::multipart;
use shotmem::provider::wire::{
    ErrorBody, ProviderRequest, ProviderResponse, RequestKind, PROTOCOL_VERSION,
};
use shotmem::provider::{AestheticScorer, EmbeddingProvider, ProviderError};
use shotmem::Frame;

fn error_reply(e: &ProviderError) -> Response {
    let status = match e {
        ProviderError::MalformedRequest(_) => 400,
        _ => 500,
    };
    let body = ErrorBody {
        protocol_version: PROTOCOL_VERSION,
        error: e.to_string(),
    };
    Response::json(status, serde_json::to_vec(&body).unwrap())
}

/// Protocol handler backed by the in-process mock.
fn mock_sidecar(req: &Request, seen: &Mutex<Vec<ProviderRequest>>) -> Response {
    let mock = MockProvider;
    if req.method == "GET" && req.path == "/health" {
        return Response::json(200, serde_json::to_vec(&mock.health()).unwrap());
    }
    let decoded = if req.path == "/embed_video" {
        let parts = match multipart::decode(&req.content_type, &req.body) {
            Ok(p) => p,
            Err(e) => return error_reply(&ProviderError::MalformedRequest(e.to_string())),
        };
        let Some((head, rest)) = parts.split_first() else {
            return error_reply(&ProviderError::MalformedRequest("empty body".into()));
        };
        let frames: Result<Vec<Frame>, _> =
            rest.iter().map(|p| Frame::decode_png(&p.data)).collect();
        ProviderRequest::decode(&head.data).and_then(|r| {
            let frames = frames.map_err(|e| ProviderError::MalformedRequest(e.to_string()))?;
            Ok((r, frames))
        })
    } else {
        ProviderRequest::decode(&req.body).map(|r| (r, Vec::new()))
    };
    let (request, frames) = match decoded {
        Ok(x) => x,
        Err(e) => return error_reply(&e),
    };
    assert_eq!(request.kind.endpoint(), req.path);
    seen.lock().unwrap().push(request.clone());
    match mock.respond(&request, &frames) {
        Ok(resp) => Response::json(200, serde_json::to_vec(&resp).unwrap()),
        Err(e) => error_reply(&e),
    }
}

fn start_mock() -> (StubServer, Arc<Mutex<Vec<ProviderRequest>>>) {
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    (StubServer::start(move |r| mock_sidecar(r, &log)), seen)
}

fn frame(seed: u8) -> Frame {
    let pixels: Vec<u8> = (0..8 * 6 * 3)
        .map(|i| (i as u8).wrapping_mul(seed).wrapping_add(seed))
        .collect();
    Frame::from_rgb(8, 6, pixels).unwrap()
}

#[test]
fn remote_mock_matches_in_process_mock() {
    let (server, seen) = start_mock();
    let client = SidecarClient::new(&server.url);
    let local = MockProvider;

    let health = client.health().unwrap();
    assert_eq!(health.protocol_version, PROTOCOL_VERSION);
    assert_eq!(
        health.model(RequestKind::EmbedImage).unwrap().dim,
        Some(MOCK_EMBED_DIM)
    );

    let f = frame(3);
    assert_eq!(
        client.embed_image(&f).unwrap(),
        local.embed_image(&f).unwrap()
    );
    let clip = vec![frame(1), frame(2), frame(5)];
    assert_eq!(
        client.embed_video(&clip).unwrap(),
        local.embed_video(&clip).unwrap()
    );
    assert_eq!(
        client.embed_text("a lighthouse at dusk").unwrap(),
        local.embed_text("a lighthouse at dusk").unwrap()
    );
    assert_eq!(
        client.score(&f, Some("ctx")).unwrap(),
        local.score(&f, Some("ctx")).unwrap()
    );

    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 4);
    assert!(seen.iter().all(|r| r.protocol_version == PROTOCOL_VERSION));
    assert_eq!(seen[3].context.as_deref(), Some("ctx"));
}

#[test]
fn repeated_requests_are_stable() {
    let (server, _) = start_mock();
    let client = SidecarClient::new(&server.url);
    let f = frame(9);
    let a = client.embed_image(&f).unwrap();
    let b = client.embed_image(&f).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.dim(), MOCK_EMBED_DIM);
    let norm: f64 = a.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!((norm - 1.0).abs() < 1e-12);
}

#[test]
fn status_codes_map_to_error_kinds() {
    let (server, _) = start_mock();
    let client = SidecarClient::new(&server.url);
    // Empty text is rejected by the server with a 400.
    let err = client.embed_text("").unwrap_err();
    assert!(matches!(err, ProviderError::MalformedRequest(_)), "{err:?}");

    let server = StubServer::start(|_| {
        Response::json(503, r#"{"protocol_version":1,"error":"gpu on fire"}"#)
    });
    let err = SidecarClient::new(&server.url).embed_text("x").unwrap_err();
    match err {
        ProviderError::Inference(m) => assert!(m.contains("gpu on fire")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn bad_responses_are_protocol_errors() {
    let cases: Vec<(&str, String)> = vec![
        (
            "wrong version",
            r#"{"protocol_version":2,"model_id":"m","dim":2,"vector":[1.0,0.0]}"#.into(),
        ),
        (
            "not unit",
            r#"{"protocol_version":1,"model_id":"m","dim":2,"vector":[3.0,0.0]}"#.into(),
        ),
        (
            "dim mismatch",
            r#"{"protocol_version":1,"model_id":"m","dim":3,"vector":[1.0,0.0]}"#.into(),
        ),
        (
            "no vector",
            r#"{"protocol_version":1,"model_id":"m","score":1.0}"#.into(),
        ),
        ("garbage", "<html>".into()),
    ];
    for (name, body) in cases {
        let server = StubServer::start(move |_| Response::json(200, body.clone()));
        let err = SidecarClient::new(&server.url).embed_text("x").unwrap_err();
        assert!(
            matches!(
                err,
                ProviderError::Protocol(_) | ProviderError::Embedding(_)
            ),
            "{name}: {err:?}"
        );
    }
}

#[test]
fn embedding_dim_checked_against_health() {
    let mismatch = Arc::new(AtomicBool::new(false));
    let flag = mismatch.clone();
    let server = StubServer::start(move |r| {
        if r.path == "/health" {
            return Response::json(200, serde_json::to_vec(&MockProvider.health()).unwrap());
        }
        flag.store(true, Ordering::SeqCst);
        let e = shotmem::FrameEmbedding::new(vec![0.6, 0.8]).unwrap();
        Response::json(
            200,
            serde_json::to_vec(&ProviderResponse::embedding("m".into(), &e)).unwrap(),
        )
    });
    let client = SidecarClient::new(&server.url);
    // Before health is known the vector is accepted on its own terms.
    assert_eq!(client.embed_text("x").unwrap().dim(), 2);
    client.health().unwrap();
    assert!(matches!(
        client.embed_text("x"),
        Err(ProviderError::Protocol(_))
    ));
    assert!(mismatch.load(Ordering::SeqCst));
}

#[test]
fn unreachable_sidecar_is_transport_error() {
    let client = SidecarClient::with_timeout(&unreachable_url(), std::time::Duration::from_secs(2));
    assert!(matches!(
        client.embed_text("x"),
        Err(ProviderError::Transport(_))
    ));
    assert!(matches!(client.health(), Err(ProviderError::Transport(_))));
}

#[test]
fn pipeline_over_http_matches_in_process_providers() {
    use shotmem::backend::MockBackend;
    use shotmem::conditioning::LatentShape;
    use shotmem::provider::Providers;
    use shotmem::{Pipeline, PipelineConfig};

    let (server, _) = start_mock();
    let script = shotmem::script::parse_script(
        r#"{"story_name":"s","story_overview":"o","scenes":[
            {"scene_num":1,"video_prompts":["a red door","the door opens","a hallway"],"cut":[true,false,true]}]}"#,
    )
    .unwrap();
    let cfg = PipelineConfig {
        shape: LatentShape {
            c: 4,
            f: 2,
            h: 4,
            w: 4,
            s: 2,
        },
        ..PipelineConfig::default()
    };
    let run = |providers| {
        Pipeline::new(Arc::new(MockBackend::default()), providers, cfg.clone())
            .unwrap()
            .run_story(&script)
            .unwrap()
    };
    let local = run(Providers::mock());
    let remote = run(Providers::sidecar(&server.url));
    assert_eq!(local.shots, remote.shots);
    assert_eq!(local.final_bank, remote.final_bank);
}
