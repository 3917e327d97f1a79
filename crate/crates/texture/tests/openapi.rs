use std::collections::BTreeSet;
use std::path::Path;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::Value;
use texture::api::{router, ServiceConfig, ERROR_CODES, ROUTES};
use texture::registry::{Dataset, Registry};
use tower::ServiceExt;

fn document() -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/openapi.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn documented_paths_match_the_router() {
    let doc = document();
    let documented: BTreeSet<(String, String)> = doc["paths"]
        .as_object()
        .unwrap()
        .iter()
        .flat_map(|(path, ops)| {
            ops.as_object()
                .unwrap()
                .keys()
                .map(move |m| (m.clone(), path.clone()))
        })
        .collect();
    let served: BTreeSet<(String, String)> =
        ROUTES.iter().map(|(m, p)| (m.to_string(), p.to_string())).collect();
    assert_eq!(documented, served);
}

#[test]
fn documented_error_codes_match() {
    let doc = document();
    let documented: BTreeSet<&str> = doc["components"]["schemas"]["Error"]["properties"]["error"]
        ["properties"]["code"]["enum"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert_eq!(documented, ERROR_CODES.iter().copied().collect());
}

#[tokio::test]
async fn every_listed_route_is_served() {
    let mut registry = Registry::new();
    registry.add(Dataset::new(texture_testkit::fixture6_with_embeddings())).unwrap();
    let app = router(registry, &ServiceConfig::default());
    for (method, path) in ROUTES {
        let uri = path.replace("{name}", "fixture6").replace("{doc_id}", "0");
        let method: Method = method.to_uppercase().parse().unwrap();
        let body = match (method == Method::POST, path.ends_with("similarity")) {
            (true, true) => r#"{"doc_id": 0}"#,
            (true, false) => "{}",
            (false, _) => "",
        };
        let resp = app
            .clone()
            .oneshot(Request::builder().method(method).uri(&uri).body(Body::from(body)).unwrap())
            .await
            .unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        assert_eq!(status, StatusCode::OK, "{uri}: {}", String::from_utf8_lossy(&bytes));
    }
}
