"""URL-level selection: domain overlap, blacklists, crawler opt-out.

Verdict precedence is fixed: domain_overlap, then blacklist, then robots.
Offline verdicts are pure functions of (url, snapshot, blacklist), which is
the reference mode; live robots fetching exists behind the same interface
but is rate limited and cached.
"""

import hashlib
import re
import time
import urllib.error
import urllib.parse
import urllib.request
from dataclasses import dataclass
from importlib.resources import files
from pathlib import Path
from typing import Callable, Iterable, Optional

PUBLIC_SUFFIX_SHA256 = (
    "c246496e808d681e916054e7845fb60a26af99f28f0def0e070e9a566f2ea441")

# base domains of corpora already collected through dedicated sources, so
# re-crawling them from the web would only duplicate content
DEFAULT_OVERLAP_DOMAINS = frozenset({
    "wikipedia.org", "wikisource.org", "wiktionary.org", "wikimedia.org",
    "gutenberg.org", "theses.fr", "hal.science", "philpapers.org",
    "bnf.fr", "europa.eu", "legifrance.gouv.fr", "vie-publique.fr",
    "openedition.org", "persee.fr", "youtube.com", "stackexchange.com",
    "assemblee-nationale.fr", "senat.fr", "uspto.gov", "ubuntu.com",
})


class SuffixRules:
    """Public-suffix rules: exact, wildcard ('*.x') and exception ('!x')."""

    def __init__(self, rules: Iterable[str]):
        self.exact = set()
        self.wildcard = set()
        self.exception = set()
        for rule in rules:
            rule = rule.strip().lower()
            if not rule or rule.startswith("//"):
                continue
            if rule.startswith("!"):
                self.exception.add(rule[1:])
            elif rule.startswith("*."):
                self.wildcard.add(rule[2:])
            else:
                self.exact.add(rule)

    def suffix_length(self, labels: list) -> int:
        """Number of labels in the public suffix of a label list."""
        best = 1  # unknown TLDs act as their own suffix
        for i in range(len(labels)):
            candidate = ".".join(labels[i:])
            n = len(labels) - i
            if candidate in self.exception:
                return n - 1
            if candidate in self.exact and n > best:
                best = n
            parent = ".".join(labels[i + 1:])
            if parent in self.wildcard and n > best:
                best = n
        return best


_cached_rules = None


def load_suffix_rules(path: Optional[Path] = None) -> SuffixRules:
    """Load the vendored snapshot (hash-pinned) or an explicit file."""
    global _cached_rules
    if path is None:
        if _cached_rules is not None:
            return _cached_rules
        raw = (files("corpuscraft") / "data" / "public_suffixes.txt").read_bytes()
        digest = hashlib.sha256(raw).hexdigest()
        if digest != PUBLIC_SUFFIX_SHA256:
            raise ValueError(
                "public suffix snapshot hash mismatch: %s" % digest)
        _cached_rules = SuffixRules(raw.decode("utf-8").splitlines())
        return _cached_rules
    return SuffixRules(Path(path).read_text(encoding="utf-8").splitlines())


_IPV4_HOST_RE = re.compile(r"^\d{1,3}(\.\d{1,3}){3}$")


def _host_of(url: str) -> str:
    parsed = urllib.parse.urlsplit(url)
    host = parsed.hostname
    if not parsed.scheme or not host:
        raise ValueError("not an absolute URL: %r" % url)
    host = host.rstrip(".")
    try:
        host = host.encode("idna").decode("ascii")
    except UnicodeError:
        pass
    return host.lower()


def base_domain(url: str, rules: Optional[SuffixRules] = None) -> str:
    """Registrable domain of a URL's host, public-suffix aware."""
    host = _host_of(url)
    if _IPV4_HOST_RE.match(host) or ":" in host:
        return host
    rules = rules or load_suffix_rules()
    labels = host.split(".")
    if any(not lab for lab in labels):
        raise ValueError("malformed host in %r" % url)
    n_suffix = rules.suffix_length(labels)
    if n_suffix >= len(labels):
        raise ValueError("host %r is a bare public suffix" % host)
    return ".".join(labels[-(n_suffix + 1):])


@dataclass(frozen=True)
class UrlVerdict:
    url: str
    verdict: str  # keep | drop | unknown
    rule: Optional[str] = None  # required for drop, None for keep

    @property
    def keep(self) -> bool:
        return self.verdict == "keep"


def overlap_filter(url: str, known_domains=DEFAULT_OVERLAP_DOMAINS,
                   rules: Optional[SuffixRules] = None) -> UrlVerdict:
    if base_domain(url, rules) in known_domains:
        return UrlVerdict(url, "drop", "domain_overlap")
    return UrlVerdict(url, "keep")


def load_blacklist(path) -> frozenset:
    """One domain per line; '#' comments and blank lines ignored."""
    entries = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip().lower()
        if line:
            entries.add(line)
    return frozenset(entries)


def blacklist_filter(url: str, blacklist,
                     rules: Optional[SuffixRules] = None) -> UrlVerdict:
    host = _host_of(url)
    if host in blacklist or base_domain(url, rules) in blacklist:
        return UrlVerdict(url, "drop", "blacklist")
    return UrlVerdict(url, "keep")


# ---------------------------------------------------------------------------
# robots.txt

class RobotsGroup:
    def __init__(self):
        self.agents = []
        self.directives = []  # (allow: bool, path pattern)


def parse_robots(body: str) -> list:
    """Parse into groups of (agents, directives). Field names are
    case-insensitive; '#' starts a comment."""
    groups = []
    current = None
    expecting_agents = False
    for raw in body.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line or ":" not in line:
            continue
        field, _, value = line.partition(":")
        field = field.strip().lower()
        value = value.strip()
        if field == "user-agent":
            if current is None or not expecting_agents:
                current = RobotsGroup()
                groups.append(current)
                expecting_agents = True
            current.agents.append(value.lower())
        elif field in ("allow", "disallow"):
            if current is None:
                continue  # directives before any user-agent line
            expecting_agents = False
            current.directives.append((field == "allow", value))
    return groups


def _select_group(groups, agent: str) -> Optional[RobotsGroup]:
    agent = agent.lower()
    fallback = None
    for group in groups:
        if agent in group.agents:
            return group
        if "*" in group.agents and fallback is None:
            fallback = group
    return fallback


def _pattern_matches(pattern: str, path: str) -> bool:
    if "*" not in pattern and not pattern.endswith("$"):
        return path.startswith(pattern)
    regex = ""
    body = pattern
    anchored = body.endswith("$")
    if anchored:
        body = body[:-1]
    for ch in body:
        regex += ".*" if ch == "*" else re.escape(ch)
    regex = "^" + regex + ("$" if anchored else "")
    return re.match(regex, path) is not None


def robots_allows(body: str, path: str, agent: str = "CCBot") -> bool:
    """Longest-match evaluation; ties go to allow; empty Disallow allows."""
    groups = parse_robots(body)
    group = _select_group(groups, agent)
    if group is None:
        return True
    if not path.startswith("/"):
        path = "/" + path
    best_len = -1
    best_allow = True
    for allow, pattern in group.directives:
        if pattern == "":
            # "Disallow:" with no value restricts nothing
            continue
        if _pattern_matches(pattern, path):
            if len(pattern) > best_len or (len(pattern) == best_len and allow):
                best_len = len(pattern)
                best_allow = allow
    return best_allow


# ---------------------------------------------------------------------------
# robots providers

class SnapshotRobotsProvider:
    """Directory of cached robots.txt bodies, one file per punycoded host.

    A missing file means "this host has no robots.txt", which is not the
    same thing as an empty file (an empty file allows everything).
    """

    def __init__(self, directory):
        self.directory = Path(directory)

    def get(self, host: str) -> Optional[str]:
        path = self.directory / host
        if not path.is_file():
            return None
        return path.read_text(encoding="utf-8", errors="replace")


class RobotsFetchError(RuntimeError):
    pass


def _default_fetch(host: str, timeout: float) -> Optional[str]:
    url = "https://%s/robots.txt" % host
    try:
        with urllib.request.urlopen(url, timeout=timeout) as resp:
            return resp.read(512 * 1024).decode("utf-8", errors="replace")
    except urllib.error.HTTPError as exc:
        if exc.code == 404:
            return None
        raise RobotsFetchError("HTTP %d for %s" % (exc.code, url))
    except OSError as exc:
        raise RobotsFetchError("fetch failed for %s: %s" % (url, exc))


class LiveRobotsProvider:
    """Rate-limited fetcher with a per-host cache.

    fetch_fn/clock/sleep_fn are injectable for tests; fetch_fn returns the
    body, None for "no robots.txt", or raises RobotsFetchError.
    """

    def __init__(self, timeout: float = 10.0, min_interval: float = 1.0,
                 fetch_fn: Optional[Callable] = None,
                 clock: Callable = time.monotonic,
                 sleep_fn: Callable = time.sleep):
        self.timeout = timeout
        self.min_interval = min_interval
        self.fetch_fn = fetch_fn or (
            lambda host: _default_fetch(host, self.timeout))
        self.clock = clock
        self.sleep_fn = sleep_fn
        self.cache = {}
        self._last_fetch = {}

    def get(self, host: str) -> Optional[str]:
        if host in self.cache:
            return self.cache[host]
        last = self._last_fetch.get(host)
        now = self.clock()
        if last is not None and now - last < self.min_interval:
            self.sleep_fn(self.min_interval - (now - last))
        self._last_fetch[host] = self.clock()
        body = self.fetch_fn(host)
        self.cache[host] = body
        return body


def optout_filter(url: str, robots,
                  rules: Optional[SuffixRules] = None,
                  agent: str = "CCBot") -> UrlVerdict:
    """Opt-out check: no robots.txt drops, and so does a disallow match.

    The host is looked up exactly as given; when absent, its registrable
    apex domain is tried before concluding the file is missing.
    """
    host = _host_of(url)
    try:
        body = robots.get(host)
        if body is None:
            apex = base_domain(url, rules)
            if apex != host:
                body = robots.get(apex)
    except RobotsFetchError:
        return UrlVerdict(url, "unknown", "robots_unavailable")
    if body is None:
        return UrlVerdict(url, "drop", "robots_missing")
    path = urllib.parse.urlsplit(url).path or "/"
    if robots_allows(body, path, agent):
        return UrlVerdict(url, "keep")
    return UrlVerdict(url, "drop", "robots_disallow")


def select_url(url: str, known_domains=DEFAULT_OVERLAP_DOMAINS,
               blacklist=frozenset(), robots=None,
               rules: Optional[SuffixRules] = None) -> UrlVerdict:
    """Apply the three rules in fixed precedence; first firing rule wins."""
    verdict = overlap_filter(url, known_domains, rules)
    if not verdict.keep:
        return verdict
    verdict = blacklist_filter(url, blacklist, rules)
    if not verdict.keep:
        return verdict
    if robots is not None:
        return optout_filter(url, robots, rules)
    return UrlVerdict(url, "keep")


def select_urls(urls, **kwargs):
    return [select_url(u, **kwargs) for u in urls]


def write_verdicts(verdicts, path) -> int:
    import csv
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["url", "verdict", "rule"])
        for v in verdicts:
            writer.writerow([v.url, v.verdict, v.rule or ""])
    return len(verdicts)
