use lettre::message::header::ContentType;
use lettre::message::{Attachment, Mailbox, MultiPart, SinglePart};
use lettre::transport::smtp::authentication::Credentials;
use lettre::{Address, Message, SmtpTransport, Transport};

use gaitworks_core::GaitClass;

use crate::error::StartupError;
use crate::session::Session;

/// Outbound mail. Sending is blocking and happens off the request path.
pub trait Mailer: Send + Sync {
    fn send(&self, message: &Message) -> Result<(), String>;
}

/// Plain (unencrypted) SMTP relay configured from
/// `smtp://[user:password@]host[:port]`; the port defaults to 25.
pub struct SmtpMailer {
    transport: SmtpTransport,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelayUrl {
    pub host: String,
    pub port: u16,
    pub credentials: Option<(String, String)>,
}

pub fn parse_relay_url(url: &str) -> Result<RelayUrl, StartupError> {
    let bad = |why: &str| StartupError::Smtp(format!("{url}: {why}"));
    let rest = url
        .strip_prefix("smtp://")
        .ok_or_else(|| bad("only smtp:// relays are supported"))?
        .trim_end_matches('/');
    let (userinfo, hostport) = match rest.rsplit_once('@') {
        Some((u, h)) => (Some(u), h),
        None => (None, rest),
    };
    let credentials = userinfo
        .map(|u| {
            u.split_once(':')
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .ok_or_else(|| bad("credentials must be user:password"))
        })
        .transpose()?;
    let (host, port) = match hostport.rsplit_once(':') {
        Some((h, p)) => (h, p.parse::<u16>().map_err(|_| bad("invalid port"))?),
        None => (hostport, 25),
    };
    if host.is_empty() || host.contains(['/', ' ']) {
        return Err(bad("missing or invalid host"));
    }
    Ok(RelayUrl {
        host: host.to_string(),
        port,
        credentials,
    })
}

impl SmtpMailer {
    pub fn from_url(url: &str) -> Result<Self, StartupError> {
        let relay = parse_relay_url(url)?;
        let mut builder = SmtpTransport::builder_dangerous(relay.host).port(relay.port);
        if let Some((user, pass)) = relay.credentials {
            builder = builder.credentials(Credentials::new(user, pass));
        }
        Ok(Self {
            transport: builder.build(),
        })
    }
}

impl Mailer for SmtpMailer {
    fn send(&self, message: &Message) -> Result<(), String> {
        self.transport.send(message).map(|_| ()).map_err(|e| e.to_string())
    }
}

/// Parses a recipient, rejecting anything that is not a bare address.
pub fn parse_address(raw: &str) -> Option<Address> {
    raw.trim().parse::<Address>().ok()
}

pub fn report_text(session: &Session) -> String {
    let p = &session.record.prediction;
    let mut text = format!(
        "Gait classification report\n\nSession: {}\nRepresentation: {}\nPredicted class: {}\n\nClass probabilities:\n",
        session.id(),
        session.record.representation,
        p.label
    );
    for (name, prob) in GaitClass::names().iter().zip(&p.probabilities) {
        text.push_str(&format!("  {name:<13} {:6.2}%\n", 100.0 * prob));
    }
    if session.record.cycles.len() > 1 {
        text.push_str(&format!(
            "\n{} gait cycles were detected; the first one was classified.\n",
            session.record.cycles.len()
        ));
    }
    text.push_str("\nThe attached images are the energy image and its grad-CAM overlay.\n");
    text
}

pub fn build_report(
    from: &str,
    to: Address,
    session: &Session,
    energy_png: Vec<u8>,
    overlay_png: Vec<u8>,
) -> Result<Message, String> {
    let from: Mailbox = from.parse().map_err(|e| format!("sender address: {e}"))?;
    let png = ContentType::parse("image/png").expect("static content type");
    Message::builder()
        .from(from)
        .to(Mailbox::new(None, to))
        .subject(format!("Gait report: {}", session.record.prediction.label))
        .multipart(
            MultiPart::mixed()
                .singlepart(SinglePart::plain(report_text(session)))
                .singlepart(Attachment::new("energy.png".into()).body(energy_png, png.clone()))
                .singlepart(Attachment::new("gradcam.png".into()).body(overlay_png, png)),
        )
        .map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn address_syntax() {
        assert!(parse_address("doctor@example.org").is_some());
        assert!(parse_address(" a.b+c@clinic.example ").is_some());
        for bad in ["x@@y", "", "no-at-sign", "@host", "user@", "a b@c.d"] {
            assert!(parse_address(bad).is_none(), "{bad}");
        }
    }

    #[test]
    fn relay_url_must_parse() {
        assert!(SmtpMailer::from_url("smtp://127.0.0.1:2525").is_ok());
        assert!(SmtpMailer::from_url("not a url").is_err());
        assert_eq!(
            parse_relay_url("smtp://u:p@mail.example:587").unwrap(),
            RelayUrl {
                host: "mail.example".into(),
                port: 587,
                credentials: Some(("u".into(), "p".into())),
            }
        );
        assert_eq!(parse_relay_url("smtp://relay").unwrap().port, 25);
        assert!(parse_relay_url("smtp://relay:99999").is_err());
        assert!(parse_relay_url("smtps://relay").is_err());
    }
}
