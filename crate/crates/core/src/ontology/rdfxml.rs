//! RDFXML_SUBSET: the fragment of RDF/XML needed for OWL-S service
//! ontologies. Anything outside the subset is rejected with a position.
//!
//! Grammar (see `docs/format.md`):
//!
//! ```text
//! rdf:RDF            root; xmlns (default namespace) or xml:base gives the ontology namespace
//!   owl:Class        rdf:about; children rdfs:label, rdfs:subClassOf@rdf:resource, <key>text</key>
//!   owl:DatatypeProperty  rdf:about; children rdfs:domain?, rdfs:range? (XSD IRI)
//!   owl:ObjectProperty    rdf:about; children rdfs:domain?, rdfs:range (class)
//!   owl:Thing        rdf:about; children rdf:type@rdf:resource+, property elements
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use quick_xml::escape::{escape, partial_escape};
use quick_xml::events::{BytesStart, Event};
use quick_xml::name::ResolveResult;
use quick_xml::NsReader;

use super::{
    Datatype, Individual, Iri, Ontology, OntologyClass, OntologyError, PropertyDef, PropertyRange,
    Value,
};

pub const RDF_NS: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#";
pub const RDFS_NS: &str = "http://www.w3.org/2000/01/rdf-schema#";
pub const OWL_NS: &str = "http://www.w3.org/2002/07/owl#";
const XML_NS: &str = "http://www.w3.org/XML/1998/namespace";

#[derive(Debug)]
struct Attr {
    ns: Option<String>,
    local: String,
    value: String,
}

#[derive(Debug)]
struct Element {
    ns: Option<String>,
    prefixed: bool,
    local: String,
    attrs: Vec<Attr>,
    default_ns: Option<String>,
    children: Vec<Element>,
    text: String,
    offset: usize,
}

impl Element {
    fn is(&self, ns: &str, local: &str) -> bool {
        self.ns.as_deref() == Some(ns) && self.local == local
    }

    fn qname(&self) -> String {
        match &self.ns {
            Some(ns) => format!("{{{ns}}}{}", self.local),
            None => self.local.clone(),
        }
    }

    fn attr(&self, ns: &str, local: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|a| a.ns.as_deref() == Some(ns) && a.local == local)
            .map(|a| a.value.as_str())
    }

    fn has_text(&self) -> bool {
        !self.text.trim().is_empty()
    }
}

struct Ctx<'a> {
    input: &'a [u8],
}

impl Ctx<'_> {
    fn err(&self, offset: usize, msg: impl Into<String>) -> OntologyError {
        OntologyError::syntax_at(self.input, offset, msg)
    }

    fn only_attrs(&self, el: &Element, allowed: &[(&str, &str)]) -> Result<(), OntologyError> {
        for a in &el.attrs {
            let ok = allowed
                .iter()
                .any(|(ns, local)| a.ns.as_deref() == Some(*ns) && a.local == *local);
            if !ok {
                return Err(self.err(
                    el.offset,
                    format!("attribute {} not allowed on {}", a.local, el.qname()),
                ));
            }
        }
        Ok(())
    }

    fn structural(&self, el: &Element) -> Result<(), OntologyError> {
        if el.has_text() {
            return Err(self.err(el.offset, format!("unexpected text inside {}", el.qname())));
        }
        Ok(())
    }

    fn leaf(&self, el: &Element) -> Result<(), OntologyError> {
        if let Some(child) = el.children.first() {
            return Err(self.err(
                child.offset,
                format!("{} must not have child elements", el.qname()),
            ));
        }
        Ok(())
    }

    fn iri(&self, el: &Element, value: &str) -> Result<Iri, OntologyError> {
        Iri::new(value).map_err(|e| self.err(el.offset, e.to_string()))
    }

    fn about(&self, el: &Element) -> Result<Iri, OntologyError> {
        let about = el
            .attr(RDF_NS, "about")
            .ok_or_else(|| self.err(el.offset, format!("{} requires rdf:about", el.qname())))?;
        self.iri(el, about)
    }

    fn resource(&self, el: &Element) -> Result<Iri, OntologyError> {
        self.only_attrs(el, &[(RDF_NS, "resource")])?;
        self.leaf(el)?;
        self.structural(el)?;
        let res = el
            .attr(RDF_NS, "resource")
            .ok_or_else(|| self.err(el.offset, format!("{} requires rdf:resource", el.qname())))?;
        self.iri(el, res)
    }
}

fn read_tree(input: &[u8]) -> Result<Element, OntologyError> {
    let text = std::str::from_utf8(input).map_err(|e| {
        OntologyError::syntax_at(input, e.valid_up_to(), "document is not valid UTF-8")
    })?;
    let mut reader = NsReader::from_str(text);
    let mut stack: Vec<Element> = Vec::new();
    let mut root: Option<Element> = None;

    let attach = |el: Element,
                  stack: &mut Vec<Element>,
                  root: &mut Option<Element>|
     -> Result<(), OntologyError> {
        if let Some(parent) = stack.last_mut() {
            parent.children.push(el);
            Ok(())
        } else if root.is_some() {
            Err(OntologyError::syntax_at(input, el.offset, "more than one root element"))
        } else {
            *root = Some(el);
            Ok(())
        }
    };

    loop {
        let offset = reader.buffer_position() as usize;
        let read = reader.read_resolved_event();
        let (resolved, event) = match read {
            Ok(ok) => ok,
            Err(e) => {
                let msg = e.to_string();
                return Err(OntologyError::syntax_at(input, reader.error_position() as usize, msg));
            }
        };
        let ns = match resolved {
            ResolveResult::Bound(ns) => Some(String::from_utf8_lossy(ns.0).into_owned()),
            ResolveResult::Unbound => None,
            ResolveResult::Unknown(prefix) => {
                return Err(OntologyError::syntax_at(
                    input,
                    offset,
                    format!("unknown namespace prefix {:?}", String::from_utf8_lossy(&prefix)),
                ))
            }
        };
        let text_sink = |stack: &mut Vec<Element>, s: &str| -> Result<(), OntologyError> {
            match stack.last_mut() {
                Some(top) => {
                    top.text.push_str(s);
                    Ok(())
                }
                None if s.trim().is_empty() => Ok(()),
                None => Err(OntologyError::syntax_at(input, offset, "text outside the root element")),
            }
        };
        match event {
            Event::Start(e) => {
                let el = element(&reader, input, ns, &e, offset)?;
                stack.push(el);
            }
            Event::Empty(e) => {
                let el = element(&reader, input, ns, &e, offset)?;
                attach(el, &mut stack, &mut root)?;
            }
            Event::End(_) => {
                let el = stack
                    .pop()
                    .ok_or_else(|| OntologyError::syntax_at(input, offset, "unbalanced end tag"))?;
                attach(el, &mut stack, &mut root)?;
            }
            Event::Text(t) => {
                let s = t
                    .decode()
                    .map_err(|e| OntologyError::syntax_at(input, offset, e.to_string()))?;
                text_sink(&mut stack, &s)?;
            }
            Event::CData(c) => {
                let s = c
                    .decode()
                    .map_err(|e| OntologyError::syntax_at(input, offset, e.to_string()))?;
                text_sink(&mut stack, &s)?;
            }
            Event::GeneralRef(r) => {
                let ch = if r.is_char_ref() {
                    r.resolve_char_ref()
                        .map_err(|e| OntologyError::syntax_at(input, offset, e.to_string()))?
                } else {
                    match r.as_ref() {
                        b"lt" => Some('<'),
                        b"gt" => Some('>'),
                        b"amp" => Some('&'),
                        b"apos" => Some('\''),
                        b"quot" => Some('"'),
                        _ => None,
                    }
                };
                let ch = ch.ok_or_else(|| {
                    OntologyError::syntax_at(
                        input,
                        offset,
                        format!("unknown entity &{};", String::from_utf8_lossy(&r)),
                    )
                })?;
                text_sink(&mut stack, ch.encode_utf8(&mut [0; 4]))?;
            }
            Event::DocType(_) => {
                return Err(OntologyError::syntax_at(input, offset, "DOCTYPE is not supported"))
            }
            Event::Comment(_) | Event::Decl(_) | Event::PI(_) => {}
            Event::Eof => break,
        }
    }
    if let Some(open) = stack.last() {
        return Err(OntologyError::syntax_at(
            input,
            input.len(),
            format!("unclosed element {}", open.qname()),
        ));
    }
    root.ok_or_else(|| OntologyError::syntax_at(input, input.len(), "document has no root element"))
}

fn element(
    reader: &NsReader<&[u8]>,
    input: &[u8],
    ns: Option<String>,
    e: &BytesStart<'_>,
    offset: usize,
) -> Result<Element, OntologyError> {
    let mut attrs = Vec::new();
    let mut default_ns = None;
    for attr in e.attributes() {
        let attr = attr.map_err(|err| OntologyError::syntax_at(input, offset, err.to_string()))?;
        let value = attr
            .unescape_value()
            .map_err(|err| OntologyError::syntax_at(input, offset, err.to_string()))?
            .into_owned();
        let key = attr.key;
        if key.as_ref() == b"xmlns" {
            default_ns = Some(value);
            continue;
        }
        if key.prefix().is_some_and(|p| p.as_ref() == b"xmlns") {
            continue;
        }
        let (resolved, local) = reader.resolve_attribute(key);
        let attr_ns = match resolved {
            ResolveResult::Bound(n) => Some(String::from_utf8_lossy(n.0).into_owned()),
            ResolveResult::Unbound => None,
            ResolveResult::Unknown(p) => {
                return Err(OntologyError::syntax_at(
                    input,
                    offset,
                    format!("unknown namespace prefix {:?}", String::from_utf8_lossy(&p)),
                ))
            }
        };
        attrs.push(Attr {
            ns: attr_ns,
            local: String::from_utf8_lossy(local.as_ref()).into_owned(),
            value,
        });
    }
    Ok(Element {
        ns,
        prefixed: e.name().prefix().is_some(),
        local: String::from_utf8_lossy(e.local_name().as_ref()).into_owned(),
        attrs,
        default_ns,
        children: Vec::new(),
        text: String::new(),
        offset,
    })
}

enum RawValue {
    Resource(Iri),
    Text {
        lexical: String,
        datatype: Option<Datatype>,
    },
}

struct RawAssertion {
    subject: Iri,
    property: Iri,
    value: RawValue,
    offset: usize,
}

pub(crate) fn parse(input: &[u8]) -> Result<Ontology, OntologyError> {
    let ctx = Ctx { input };
    let root = read_tree(input)?;
    if !root.is(RDF_NS, "RDF") {
        return Err(ctx.err(root.offset, format!("root element must be rdf:RDF, found {}", root.qname())));
    }
    ctx.only_attrs(&root, &[(XML_NS, "base")])?;
    ctx.structural(&root)?;
    let namespace = root
        .attr(XML_NS, "base")
        .map(str::to_string)
        .or_else(|| root.default_ns.clone())
        .ok_or_else(|| ctx.err(root.offset, "rdf:RDF must declare a default namespace or xml:base"))?;
    let mut o = Ontology::new(ctx.iri(&root, &namespace)?);

    let mut declared = BTreeSet::new();
    let mut data_ranges: BTreeMap<Iri, Option<Datatype>> = BTreeMap::new();
    let mut raw = Vec::new();

    for el in &root.children {
        ctx.structural(el)?;
        let about = if el.ns.as_deref() == Some(OWL_NS) {
            ctx.about(el)?
        } else {
            return Err(ctx.err(el.offset, format!("element {} is outside the supported subset", el.qname())));
        };
        if !declared.insert(about.clone()) {
            return Err(ctx.err(el.offset, format!("duplicate declaration of {about}")));
        }
        match el.local.as_str() {
            "Class" => {
                ctx.only_attrs(el, &[(RDF_NS, "about")])?;
                o.add_class(read_class(&ctx, el, about)?);
            }
            "DatatypeProperty" | "ObjectProperty" => {
                ctx.only_attrs(el, &[(RDF_NS, "about")])?;
                let object = el.local == "ObjectProperty";
                let mut domain = None;
                let mut range = None;
                for child in &el.children {
                    let slot = if child.is(RDFS_NS, "domain") {
                        &mut domain
                    } else if child.is(RDFS_NS, "range") {
                        &mut range
                    } else {
                        return Err(ctx.err(child.offset, format!("element {} is outside the supported subset", child.qname())));
                    };
                    if slot.is_some() {
                        return Err(ctx.err(child.offset, format!("repeated {}", child.qname())));
                    }
                    *slot = Some((ctx.resource(child)?, child.offset));
                }
                let domain = domain.map(|(iri, _)| iri);
                if object {
                    let (range, _) = range.ok_or_else(|| ctx.err(el.offset, format!("object property {about} requires rdfs:range")))?;
                    o.add_property(PropertyDef {
                        iri: about,
                        domain,
                        range: PropertyRange::Class(range),
                    });
                } else {
                    let datatype = match range {
                        Some((iri, offset)) => Some(Datatype::from_xsd_iri(iri.as_str()).ok_or_else(|| {
                            ctx.err(offset, format!("unsupported datatype {iri}"))
                        })?),
                        None => None,
                    };
                    data_ranges.insert(about.clone(), datatype);
                    o.add_property(PropertyDef {
                        iri: about,
                        domain,
                        range: PropertyRange::Datatype(datatype.unwrap_or(Datatype::String)),
                    });
                }
            }
            "Thing" => {
                ctx.only_attrs(el, &[(RDF_NS, "about")])?;
                let mut types = BTreeSet::new();
                for child in &el.children {
                    if child.is(RDF_NS, "type") {
                        types.insert(ctx.resource(child)?);
                    } else {
                        raw.push(read_assertion(&ctx, child, &about)?);
                    }
                }
                if types.is_empty() {
                    return Err(ctx.err(el.offset, format!("individual {about} needs at least one rdf:type")));
                }
                o.add_individual(Individual {
                    iri: about,
                    types,
                    assertions: BTreeMap::new(),
                });
            }
            _ => {
                return Err(ctx.err(el.offset, format!("element {} is outside the supported subset", el.qname())))
            }
        }
    }

    let mut inferred: BTreeMap<Iri, Datatype> = BTreeMap::new();
    for a in raw {
        let prop = o.properties.get(&a.property).ok_or_else(|| {
            OntologyError::unresolved(&a.property, format!("property asserted on {}", a.subject))
        })?;
        let value = match (&prop.range, a.value) {
            (PropertyRange::Class(_), RawValue::Resource(target)) => Value::Ref(target),
            (PropertyRange::Class(_), RawValue::Text { lexical, datatype: None }) => {
                Value::Ref(text_ref(&lexical).map_err(|m| ctx.err(a.offset, m))?)
            }
            (PropertyRange::Class(_), RawValue::Text { .. }) => {
                return Err(ctx.err(a.offset, format!("typed literal on object property {}", a.property)))
            }
            (PropertyRange::Datatype(_), RawValue::Resource(_)) => {
                return Err(ctx.err(a.offset, format!("rdf:resource on data property {}", a.property)))
            }
            (PropertyRange::Datatype(_), RawValue::Text { lexical, datatype }) => {
                let datatype = match datatype {
                    Some(dt) if !dt.accepts(&lexical) => {
                        return Err(OntologyError::BadDatatype {
                            property: a.property,
                            lexical,
                            datatype: dt,
                        })
                    }
                    Some(dt) => dt,
                    None => Datatype::infer(&lexical),
                };
                inferred
                    .entry(a.property.clone())
                    .and_modify(|d| *d = d.join(datatype))
                    .or_insert(datatype);
                Value::Literal { datatype, lexical }
            }
        };
        o.individuals
            .get_mut(&a.subject)
            .expect("subject was declared")
            .assert(a.property, value);
    }
    for (iri, declared_range) in data_ranges {
        if declared_range.is_none() {
            let dt = inferred.get(&iri).copied().unwrap_or(Datatype::String);
            o.properties.get_mut(&iri).expect("declared").range = PropertyRange::Datatype(dt);
        }
    }
    o.validate()?;
    Ok(o)
}

fn read_class(ctx: &Ctx<'_>, el: &Element, iri: Iri) -> Result<OntologyClass, OntologyError> {
    let mut class = OntologyClass::new(iri);
    for child in &el.children {
        if child.is(RDFS_NS, "label") {
            ctx.only_attrs(child, &[])?;
            ctx.leaf(child)?;
            if class.label.replace(child.text.clone()).is_some() {
                return Err(ctx.err(child.offset, "repeated rdfs:label"));
            }
        } else if child.is(RDFS_NS, "subClassOf") {
            class.superclasses.insert(ctx.resource(child)?);
        } else if !child.prefixed {
            ctx.only_attrs(child, &[])?;
            ctx.leaf(child)?;
            if class
                .annotations
                .insert(child.local.clone(), child.text.clone())
                .is_some()
            {
                return Err(ctx.err(child.offset, format!("repeated annotation {}", child.local)));
            }
        } else {
            return Err(ctx.err(child.offset, format!("element {} is outside the supported subset", child.qname())));
        }
    }
    Ok(class)
}

fn read_assertion(ctx: &Ctx<'_>, el: &Element, subject: &Iri) -> Result<RawAssertion, OntologyError> {
    let property = if !el.prefixed {
        Iri::fragment(&el.local).map_err(|e| ctx.err(el.offset, e.to_string()))?
    } else {
        match el.ns.as_deref() {
            Some(RDF_NS) | Some(RDFS_NS) | Some(OWL_NS) | None => {
                return Err(ctx.err(el.offset, format!("element {} is outside the supported subset", el.qname())))
            }
            Some(ns) => ctx.iri(el, &format!("{ns}{}", el.local))?,
        }
    };
    ctx.only_attrs(el, &[(RDF_NS, "resource"), (RDF_NS, "datatype")])?;
    ctx.leaf(el)?;
    let value = if el.attr(RDF_NS, "resource").is_some() {
        if el.attr(RDF_NS, "datatype").is_some() {
            return Err(ctx.err(el.offset, "rdf:resource and rdf:datatype are exclusive"));
        }
        RawValue::Resource(ctx.resource(el)?)
    } else {
        let datatype = match el.attr(RDF_NS, "datatype") {
            Some(dt) => Some(
                Datatype::from_xsd_iri(dt)
                    .ok_or_else(|| ctx.err(el.offset, format!("unsupported datatype {dt}")))?,
            ),
            None => None,
        };
        RawValue::Text {
            lexical: el.text.clone(),
            datatype,
        }
    };
    Ok(RawAssertion {
        subject: subject.clone(),
        property,
        value,
        offset: el.offset,
    })
}

/// Object-property values written as text (`<hasEbook>bk101</hasEbook>`)
/// name an individual by local name.
fn text_ref(text: &str) -> Result<Iri, String> {
    let t = text.trim();
    let iri = if t.starts_with('#') || t.contains(':') {
        Iri::new(t)
    } else {
        Iri::fragment(t)
    };
    iri.map_err(|e| format!("bad individual reference {t:?}: {e}"))
}

pub(crate) fn serialize(o: &Ontology) -> Vec<u8> {
    // absolute property IRIs get a generated prefix declared on the root
    let mut prefixes: BTreeMap<&str, String> = BTreeMap::new();
    for p in o.properties.keys().filter(|p| !p.is_fragment()) {
        let n = prefixes.len();
        prefixes
            .entry(p.namespace_part())
            .or_insert_with(|| format!("ns{n}"));
    }
    let element_name = |p: &Iri| -> String {
        if p.is_fragment() {
            p.local_name().to_string()
        } else {
            format!("{}:{}", prefixes[p.namespace_part()], p.local_name())
        }
    };

    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = write!(
        out,
        "<rdf:RDF xmlns:rdf=\"{RDF_NS}\" xmlns:rdfs=\"{RDFS_NS}\" xmlns:owl=\"{OWL_NS}\" xmlns=\"{}\"",
        escape(o.namespace.as_str())
    );
    for (ns, prefix) in &prefixes {
        let _ = write!(out, " xmlns:{prefix}=\"{}\"", escape(*ns));
    }
    out.push_str(">\n");

    for c in o.classes.values() {
        let about = escape(c.iri.as_str());
        if c.label.is_none() && c.superclasses.is_empty() && c.annotations.is_empty() {
            let _ = writeln!(out, "  <owl:Class rdf:about=\"{about}\"/>");
            continue;
        }
        let _ = writeln!(out, "  <owl:Class rdf:about=\"{about}\">");
        if let Some(label) = &c.label {
            let _ = writeln!(out, "    <rdfs:label>{}</rdfs:label>", partial_escape(label.as_str()));
        }
        for sup in &c.superclasses {
            let _ = writeln!(out, "    <rdfs:subClassOf rdf:resource=\"{}\"/>", escape(sup.as_str()));
        }
        for (k, v) in &c.annotations {
            let _ = writeln!(out, "    <{k}>{}</{k}>", partial_escape(v.as_str()));
        }
        out.push_str("  </owl:Class>\n");
    }

    for p in o.properties.values() {
        let tag = match p.range {
            PropertyRange::Datatype(_) => "owl:DatatypeProperty",
            PropertyRange::Class(_) => "owl:ObjectProperty",
        };
        let _ = writeln!(out, "  <{tag} rdf:about=\"{}\">", escape(p.iri.as_str()));
        if let Some(domain) = &p.domain {
            let _ = writeln!(out, "    <rdfs:domain rdf:resource=\"{}\"/>", escape(domain.as_str()));
        }
        let range = match &p.range {
            PropertyRange::Datatype(dt) => dt.xsd_iri(),
            PropertyRange::Class(c) => c.to_string(),
        };
        let _ = writeln!(out, "    <rdfs:range rdf:resource=\"{}\"/>", escape(range.as_str()));
        let _ = writeln!(out, "  </{tag}>");
    }

    for ind in o.individuals.values() {
        let _ = writeln!(out, "  <owl:Thing rdf:about=\"{}\">", escape(ind.iri.as_str()));
        for ty in &ind.types {
            let _ = writeln!(out, "    <rdf:type rdf:resource=\"{}\"/>", escape(ty.as_str()));
        }
        for (prop, values) in &ind.assertions {
            let name = element_name(prop);
            for v in values {
                match v {
                    Value::Ref(target) => {
                        let _ = writeln!(out, "    <{name} rdf:resource=\"{}\"/>", escape(target.as_str()));
                    }
                    Value::Literal { datatype, lexical } if *datatype == Datatype::infer(lexical) => {
                        let _ = writeln!(out, "    <{name}>{}</{name}>", partial_escape(lexical.as_str()));
                    }
                    Value::Literal { datatype, lexical } => {
                        let _ = writeln!(
                            out,
                            "    <{name} rdf:datatype=\"{}\">{}</{name}>",
                            datatype.xsd_iri(),
                            partial_escape(lexical.as_str())
                        );
                    }
                }
            }
        }
        out.push_str("  </owl:Thing>\n");
    }
    out.push_str("</rdf:RDF>\n");
    out.into_bytes()
}
