"""NCBI E-utilities client for literature retrieval.

Wraps esearch (pmid discovery, JSON) and efetch (article records, XML)
with polite rate limiting, a TTL cache, and review-then-recency
re-ranking. Transport is injectable so the whole client runs offline
against canned fixtures in tests.
"""
from __future__ import annotations

import json
import logging
import time
import xml.etree.ElementTree as ET
from collections import deque
from dataclasses import dataclass, field
from datetime import date
from urllib.parse import urlencode

import requests

from .errors import ParseError, RateLimited, TransportError

log = logging.getLogger(__name__)

DEFAULT_BASE_URL = "https://eutils.ncbi.nlm.nih.gov/entrez/eutils"
ARTICLE_URL_TEMPLATE = "https://pubmed.ncbi.nlm.nih.gov/{pmid}/"

OVERSAMPLE = 3  # fetch extra candidates so re-ranking has room to work
EFETCH_BATCH = 50
DEFAULT_CACHE_TTL_S = 15 * 60


@dataclass
class LitQuery:
    term: str
    max_results: int = 3
    years_back: int = 5
    prefer_reviews: bool = True

    def __post_init__(self):
        if self.max_results < 1:
            raise ValueError("max_results must be >= 1")
        if self.years_back < 0:
            raise ValueError("years_back must be >= 0")

    def cache_key(self) -> tuple:
        return (self.term, self.max_results, self.years_back, self.prefer_reviews)


@dataclass
class Article:
    pmid: str
    title: str
    authors: list[str]
    journal: str
    year: int
    abstract: str = ""
    is_review: bool = False

    @property
    def url(self) -> str:
        return ARTICLE_URL_TEMPLATE.format(pmid=self.pmid)

    def to_dict(self) -> dict:
        return {
            "pmid": self.pmid,
            "title": self.title,
            "authors": list(self.authors),
            "journal": self.journal,
            "year": self.year,
            "abstract": self.abstract,
            "is_review": self.is_review,
            "url": self.url,
        }

    @classmethod
    def from_dict(cls, rec: dict) -> "Article":
        return cls(
            pmid=rec["pmid"],
            title=rec["title"],
            authors=list(rec["authors"]),
            journal=rec["journal"],
            year=rec["year"],
            abstract=rec.get("abstract", ""),
            is_review=bool(rec.get("is_review", False)),
        )


@dataclass
class RequestDescriptor:
    url: str
    params: dict[str, str]

    def full_url(self) -> str:
        return f"{self.url}?{urlencode(self.params)}"


def _years_earlier(day: date, years: int) -> date:
    try:
        return day.replace(year=day.year - years)
    except ValueError:  # Feb 29 on a non-leap target year
        return day.replace(year=day.year - years, day=28)


def build_search_request(q: LitQuery, today: date,
                         base_url: str = DEFAULT_BASE_URL) -> RequestDescriptor:
    """esearch request: date-windowed, oversampled, optionally review-boosted.

    The review clause is a soft OR (set-equivalent to the bare term) so a
    topic with no published reviews still returns results; the hard
    preference is applied later by rank_articles.
    """
    term = q.term
    if q.prefer_reviews:
        term = f"({q.term}) OR (({q.term}) AND (systematic review[pt] OR review[pt]))"
    start = _years_earlier(today, q.years_back)
    params = {
        "db": "pubmed",
        "term": term,
        "retmax": str(q.max_results * OVERSAMPLE),
        "retmode": "json",
        "datetype": "pdat",
        "mindate": start.strftime("%Y/%m/%d"),
        "maxdate": today.strftime("%Y/%m/%d"),
    }
    return RequestDescriptor(url=f"{base_url}/esearch.fcgi", params=params)


def parse_esearch_response(body: str) -> list[str]:
    try:
        payload = json.loads(body)
        ids = payload["esearchresult"]["idlist"]
    except (ValueError, KeyError, TypeError) as exc:
        raise ParseError(f"malformed esearch response: {exc}") from exc
    if not isinstance(ids, list) or not all(isinstance(i, str) for i in ids):
        raise ParseError("esearch idlist is not a list of strings")
    return ids


def _text(element, path: str, default: str = "") -> str:
    found = element.find(path)
    return (found.text or default) if found is not None else default


def _parse_year(article_el) -> int:
    year = _text(article_el, ".//Journal/JournalIssue/PubDate/Year")
    if year.isdigit():
        return int(year)
    medline = _text(article_el, ".//Journal/JournalIssue/PubDate/MedlineDate")
    for token in medline.replace("-", " ").split():
        if token.isdigit() and len(token) == 4:
            return int(token)
    return 0


def parse_efetch_response(body: str) -> tuple[list[Article], list[str]]:
    """Parses PubmedArticleSet XML into Article records plus warnings."""
    try:
        root = ET.fromstring(body)
    except ET.ParseError as exc:
        raise ParseError(f"malformed efetch XML: {exc}") from exc
    articles: list[Article] = []
    warnings: list[str] = []
    for node in root.iter("PubmedArticle"):
        pmid = _text(node, ".//MedlineCitation/PMID") or _text(node, ".//PMID")
        article_el = node.find(".//MedlineCitation/Article")
        if article_el is None or not pmid:
            warnings.append("skipped record without PMID/Article")
            continue
        title = _text(article_el, "ArticleTitle")
        authors = []
        for author in article_el.findall(".//AuthorList/Author"):
            last = _text(author, "LastName")
            fore = _text(author, "ForeName") or _text(author, "Initials")
            if last:
                authors.append(f"{fore} {last}".strip())
            elif _text(author, "CollectiveName"):
                authors.append(_text(author, "CollectiveName"))
        journal = _text(article_el, ".//Journal/Title")
        abstract_parts = [
            (el.text or "") for el in article_el.findall(".//Abstract/AbstractText")
        ]
        abstract = " ".join(p.strip() for p in abstract_parts if p and p.strip())
        if not abstract:
            warnings.append(f"pmid {pmid}: no abstract text")
        pub_types = [
            (el.text or "") for el in article_el.findall(".//PublicationTypeList/PublicationType")
        ]
        is_review = any("review" in t.lower() for t in pub_types)
        articles.append(Article(
            pmid=pmid,
            title=title,
            authors=authors,
            journal=journal,
            year=_parse_year(article_el),
            abstract=abstract,
            is_review=is_review,
        ))
    return articles, warnings


def rank_articles(articles: list[Article], q: LitQuery) -> list[Article]:
    """Stable sort: reviews first, then newer, then original order; truncated."""
    ranked = sorted(articles, key=lambda a: (not a.is_review, -a.year))
    return ranked[:q.max_results]


class RateLimiter:
    """Sliding-window limiter: at most `max_per_second` admissions per second.

    Clock and sleep are injectable for deterministic tests.
    """

    def __init__(self, max_per_second: int, clock=time.monotonic, sleep=time.sleep):
        self.max_per_second = max_per_second
        self._clock = clock
        self._sleep = sleep
        self._admitted: deque[float] = deque()

    def acquire(self) -> float:
        while True:
            now = self._clock()
            while self._admitted and now - self._admitted[0] >= 1.0:
                self._admitted.popleft()
            if len(self._admitted) < self.max_per_second:
                self._admitted.append(now)
                return now
            self._sleep(self._admitted[0] + 1.0 - now)


class HttpTransport:
    """Default transport: GET via requests."""

    def __init__(self, timeout_s: float = 30.0):
        self.timeout_s = timeout_s

    def get(self, url: str, params: dict[str, str]):
        try:
            resp = requests.get(url, params=params, timeout=self.timeout_s)
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from exc
        return resp.status_code, resp.text


@dataclass
class _CacheEntry:
    at: float
    value: object


class PubMedClient:
    """Literature lookups with rate limiting, caching and retries.

    Without an API key NCBI allows 3 requests/second; with one, 10.
    """

    def __init__(self, transport=None, api_key: str = "",
                 base_url: str = DEFAULT_BASE_URL,
                 clock=time.monotonic, sleep=time.sleep,
                 cache_ttl_s: float = DEFAULT_CACHE_TTL_S,
                 max_retries: int = 3, today: date | None = None):
        self.transport = transport or HttpTransport()
        self.api_key = api_key
        self.base_url = base_url.rstrip("/")
        self.cache_ttl_s = cache_ttl_s
        self.max_retries = max_retries
        self._clock = clock
        self._sleep = sleep
        self._today = today
        self.rate_limiter = RateLimiter(
            10 if api_key else 3, clock=clock, sleep=sleep
        )
        self._cache: dict[tuple, _CacheEntry] = {}

    def _cached(self, key: tuple):
        entry = self._cache.get(key)
        if entry is not None and self._clock() - entry.at < self.cache_ttl_s:
            return entry.value
        return None

    def _store(self, key: tuple, value) -> None:
        self._cache[key] = _CacheEntry(at=self._clock(), value=value)

    def _request(self, url: str, params: dict[str, str]) -> str:
        if self.api_key:
            params = {**params, "api_key": self.api_key}
        last: Exception | None = None
        for attempt in range(self.max_retries):
            self.rate_limiter.acquire()
            try:
                status, body = self.transport.get(url, params)
            except TransportError as exc:
                last = exc
                if attempt < self.max_retries - 1:
                    self._sleep(0.25 * (2 ** attempt))
                continue
            if status == 429:
                last = RateLimited(f"HTTP 429 from {url}")
                if attempt < self.max_retries - 1:
                    self._sleep(0.5 * (2 ** attempt))
                continue
            if status != 200:
                raise TransportError(f"HTTP {status} from {url}")
            return body
        if isinstance(last, RateLimited):
            raise last
        raise TransportError(f"transport failed after {self.max_retries} attempts: {last}")

    def search(self, q: LitQuery) -> list[str]:
        key = ("esearch",) + q.cache_key()
        cached = self._cached(key)
        if cached is not None:
            return list(cached)
        today = self._today or date.today()
        req = build_search_request(q, today, base_url=self.base_url)
        body = self._request(req.url, req.params)
        pmids = parse_esearch_response(body)
        self._store(key, list(pmids))
        return pmids

    def fetch_articles(self, pmids: list[str]) -> list[Article]:
        if not pmids:
            raise ValueError("pmids must be non-empty")
        key = ("efetch", tuple(pmids))
        cached = self._cached(key)
        if cached is not None:
            return list(cached)
        articles: list[Article] = []
        for start in range(0, len(pmids), EFETCH_BATCH):
            batch = pmids[start:start + EFETCH_BATCH]
            body = self._request(f"{self.base_url}/efetch.fcgi", {
                "db": "pubmed",
                "id": ",".join(batch),
                "retmode": "xml",
                "rettype": "abstract",
            })
            parsed, warnings = parse_efetch_response(body)
            for w in warnings:
                log.warning("efetch: %s", w)
            articles.extend(parsed)
        self._store(key, list(articles))
        return articles

    def lookup(self, q: LitQuery) -> list[Article]:
        """search + fetch + rank in one call; fully cached."""
        key = ("lookup",) + q.cache_key()
        cached = self._cached(key)
        if cached is not None:
            return list(cached)
        pmids = self.search(q)
        if not pmids:
            self._store(key, [])
            return []
        articles = self.fetch_articles(pmids)
        ranked = rank_articles(articles, q)
        self._store(key, list(ranked))
        return ranked
