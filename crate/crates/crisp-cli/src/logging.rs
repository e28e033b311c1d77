//! Minimal stderr logger driven by the `CRISP_LOG` environment variable
//! (`error`, `info`, or `debug`; default `error`).

use std::sync::OnceLock;

#[derive(Clone, Copy, PartialEq, PartialOrd)]
pub enum Level {
    Error = 0,
    Info = 1,
    Debug = 2,
}

pub fn level() -> Level {
    static LEVEL: OnceLock<Level> = OnceLock::new();
    *LEVEL.get_or_init(|| match std::env::var("CRISP_LOG").as_deref() {
        Ok("debug") => Level::Debug,
        Ok("info") => Level::Info,
        _ => Level::Error,
    })
}

pub fn info(msg: impl AsRef<str>) {
    if level() >= Level::Info {
        eprintln!("[info] {}", msg.as_ref());
    }
}

pub fn debug(msg: impl AsRef<str>) {
    if level() >= Level::Debug {
        eprintln!("[debug] {}", msg.as_ref());
    }
}

pub fn error(msg: impl AsRef<str>) {
    eprintln!("[error] {}", msg.as_ref());
}
