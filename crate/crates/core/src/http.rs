//! Blocking HTTP access shared by the SPARQL, linker and embedding clients.
//!
//! Every request goes through the same gate: at most `max_in_flight`
//! concurrent requests, a minimum spacing between request starts, and
//! retries with exponential backoff on transport failures, 429 and 5xx.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use ureq::http::Response;
use ureq::{Agent, Body};

use crate::error::{Error, Result};

const MAX_BODY_BYTES: u64 = 512 * 1024 * 1024;

#[derive(Clone, Debug, PartialEq)]
pub struct HttpSettings {
    pub timeout: Duration,
    pub max_retries: u32,
    /// Delay before the first retry; doubled for each further one.
    pub backoff: Duration,
    pub min_interval: Duration,
    pub max_in_flight: usize,
}

impl Default for HttpSettings {
    fn default() -> Self {
        HttpSettings {
            timeout: Duration::from_secs(60),
            max_retries: 3,
            backoff: Duration::from_millis(500),
            min_interval: Duration::ZERO,
            max_in_flight: 4,
        }
    }
}

struct Gate {
    in_flight: Mutex<usize>,
    released: Condvar,
    limit: usize,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap();
        while *n >= self.limit {
            n = self.released.wait(n).unwrap();
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().unwrap() -= 1;
        self.0.released.notify_one();
    }
}

enum Attempt {
    Done(String),
    Retry(String),
}

pub struct HttpClient {
    agent: Agent,
    settings: HttpSettings,
    gate: Gate,
    last_start: Mutex<Option<Instant>>,
}

impl HttpClient {
    pub fn new(settings: HttpSettings) -> Self {
        let agent: Agent = Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(settings.timeout))
            .user_agent(concat!("srtk/", env!("CARGO_PKG_VERSION")))
            .build()
            .into();
        HttpClient {
            agent,
            gate: Gate {
                in_flight: Mutex::new(0),
                released: Condvar::new(),
                limit: settings.max_in_flight.max(1),
            },
            settings,
            last_start: Mutex::new(None),
        }
    }

    pub fn settings(&self) -> &HttpSettings {
        &self.settings
    }

    fn throttle(&self) {
        let mut last = self.last_start.lock().unwrap();
        if let Some(prev) = *last {
            let ready = prev + self.settings.min_interval;
            let now = Instant::now();
            if ready > now {
                thread::sleep(ready - now);
            }
        }
        *last = Some(Instant::now());
    }

    fn attempt<F>(&self, url: &str, send: &F) -> Result<Attempt>
    where
        F: Fn(&Agent) -> Result<Response<Body>, ureq::Error>,
    {
        let _permit = self.gate.acquire();
        self.throttle();
        let mut response = match send(&self.agent) {
            Ok(r) => r,
            Err(e) => return Ok(Attempt::Retry(e.to_string())),
        };
        let status = response.status().as_u16();
        match status {
            200..=299 => response
                .body_mut()
                .with_config()
                .limit(MAX_BODY_BYTES)
                .read_to_string()
                .map(Attempt::Done)
                .or_else(|e| Ok(Attempt::Retry(format!("reading body: {e}")))),
            401 | 403 => Err(Error::Auth {
                endpoint: url.to_owned(),
                status,
            }),
            429 | 500..=599 => Ok(Attempt::Retry(format!("{url} answered {status}"))),
            _ => {
                let body = response.body_mut().read_to_string().unwrap_or_default();
                Err(Error::Protocol(format!(
                    "{url} answered {status}: {}",
                    body.chars().take(200).collect::<String>()
                )))
            }
        }
    }

    /// Runs `send` until it succeeds or the retry budget is spent, returning the body text.
    pub fn execute<F>(&self, url: &str, send: F) -> Result<String>
    where
        F: Fn(&Agent) -> Result<Response<Body>, ureq::Error>,
    {
        let mut last_failure = String::new();
        for attempt in 0..=self.settings.max_retries {
            if attempt > 0 {
                let delay = self.settings.backoff * 2u32.saturating_pow(attempt - 1);
                log::debug!("retrying {url} in {delay:?} after: {last_failure}");
                thread::sleep(delay);
            }
            match self.attempt(url, &send)? {
                Attempt::Done(body) => return Ok(body),
                Attempt::Retry(why) => last_failure = why,
            }
        }
        Err(Error::Transport(format!(
            "{url}: giving up after {} attempt(s): {last_failure}",
            self.settings.max_retries + 1
        )))
    }

    pub fn post_form(&self, url: &str, fields: &[(&str, &str)], accept: &str) -> Result<String> {
        self.execute(url, |agent| {
            agent
                .post(url)
                .header("Accept", accept)
                .send_form(fields.iter().copied())
        })
    }

    pub fn get(&self, url: &str, query: &[(&str, &str)], accept: &str) -> Result<String> {
        self.execute(url, |agent| {
            agent
                .get(url)
                .header("Accept", accept)
                .query_pairs(query.iter().copied())
                .call()
        })
    }

    pub fn post_json(
        &self,
        url: &str,
        body: &serde_json::Value,
        headers: &[(&str, &str)],
    ) -> Result<String> {
        self.execute(url, |agent| {
            let mut req = agent.post(url).header("Accept", "application/json");
            for (k, v) in headers {
                req = req.header(*k, *v);
            }
            req.send_json(body)
        })
    }
}
