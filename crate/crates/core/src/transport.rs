//! Blocking HTTP request/response transport shared by the remote clients.

use std::time::Duration;

/// Status code and raw body of an HTTP exchange.
#[derive(Debug, Clone)]
pub struct HttpReply {
    pub status: u16,
    pub body: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct HttpTransport {
    agent: ureq::Agent,
    base_url: String,
    max_body: u64,
}

impl HttpTransport {
    pub fn new(base_url: &str, timeout: Duration, max_body: u64) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            agent,
            base_url: base_url.trim_end_matches('/').to_string(),
            max_body,
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    pub fn post(&self, path: &str, content_type: &str, body: &[u8]) -> Result<HttpReply, String> {
        let url = format!("{}{path}", self.base_url);
        let mut resp = self
            .agent
            .post(&url)
            .header("content-type", content_type)
            .send(body)
            .map_err(|e| format!("POST {url}: {e}"))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .with_config()
            .limit(self.max_body)
            .read_to_vec()
            .map_err(|e| format!("reading response from {url}: {e}"))?;
        Ok(HttpReply { status, body })
    }

    pub fn get(&self, path: &str) -> Result<HttpReply, String> {
        let url = format!("{}{path}", self.base_url);
        let mut resp = self
            .agent
            .get(&url)
            .call()
            .map_err(|e| format!("GET {url}: {e}"))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .with_config()
            .limit(self.max_body)
            .read_to_vec()
            .map_err(|e| format!("reading response from {url}: {e}"))?;
        Ok(HttpReply { status, body })
    }
}
