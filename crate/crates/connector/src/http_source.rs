//! Federation source client: reads another connector's store over its admin
//! API. Any transport or protocol failure makes the source unreachable.

use std::time::Duration;

use fedspace_core::store::{
    DatasetAspect, DatasetDetail, EntityRecord, Page, PageRequest, SourceError, SourceStore,
};
use fedspace_core::urn::Urn;
use percent_encoding::{utf8_percent_encode, NON_ALPHANUMERIC};

pub struct HttpSourceStore {
    base: String,
    admin_token: String,
    http: reqwest::blocking::Client,
}

impl HttpSourceStore {
    pub fn new(base: &str, admin_token: &str) -> HttpSourceStore {
        HttpSourceStore {
            base: base.trim_end_matches('/').to_string(),
            admin_token: admin_token.to_string(),
            http: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(10))
                .build()
                .expect("http client"),
        }
    }

    fn get_json<T: serde::de::DeserializeOwned>(&self, path: &str) -> Result<T, SourceError> {
        let url = format!("{}{path}", self.base);
        let response = self
            .http
            .get(&url)
            .header("X-Admin-Token", &self.admin_token)
            .send()
            .map_err(|e| SourceError(format!("{url}: {e}")))?;
        if !response.status().is_success() {
            return Err(SourceError(format!("{url}: status {}", response.status())));
        }
        response
            .json()
            .map_err(|e| SourceError(format!("{url}: bad body: {e}")))
    }
}

pub fn encode_urn(urn: &Urn) -> String {
    utf8_percent_encode(urn.as_str(), NON_ALPHANUMERIC).to_string()
}

impl SourceStore for HttpSourceStore {
    fn list_domains(&self, page: PageRequest) -> Result<Page<EntityRecord>, SourceError> {
        self.get_json(&format!(
            "/admin/store/domains?offset={}&limit={}",
            page.offset, page.limit
        ))
    }

    fn list_datasets_in_domain(
        &self,
        domain: &Urn,
        page: PageRequest,
    ) -> Result<Page<(EntityRecord, DatasetAspect)>, SourceError> {
        self.get_json(&format!(
            "/admin/store/domains/{}/datasets?offset={}&limit={}",
            encode_urn(domain),
            page.offset,
            page.limit
        ))
    }

    fn get_dataset_detail(&self, urn: &Urn) -> Result<DatasetDetail, SourceError> {
        self.get_json(&format!("/admin/store/datasets/{}", encode_urn(urn)))
    }
}
