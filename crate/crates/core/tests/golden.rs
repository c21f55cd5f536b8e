use std::path::PathBuf;

use codeloop_core::client::build_request_body;
use codeloop_core::image::solid_png;
use codeloop_core::session::{ContentPart, Message, Role};
use codeloop_core::ClientConfig;

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden").join(name)
}

/// Set `UPDATE_GOLDEN=1` to rewrite the file after an intended change.
fn check(name: &str, actual: &[u8]) {
    let path = golden(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read(&path).unwrap();
    assert_eq!(String::from_utf8_lossy(actual), String::from_utf8_lossy(&expected));
}

#[test]
fn chat_request_body() {
    let img = solid_png(1, 1, [255, 0, 0]);
    let messages = vec![
        Message::text(Role::System, "sys"),
        Message::new(Role::User, vec![ContentPart::image(img.clone())]),
        Message::text(Role::Assistant, "<code>\nprint(1)\n</code>"),
        Message::new(
            Role::User,
            vec![ContentPart::text("<interpreter>1\n</interpreter>"), ContentPart::image(img)],
        ),
    ];
    let config = ClientConfig {
        model_id: "gpt-4.1".into(),
        temperature: 0.6,
        max_tokens: Some(2048),
        ..ClientConfig::default()
    };
    let mut body = build_request_body(&messages, &config);
    body.push(b'\n');
    check("chat_request.json", &body);
}
