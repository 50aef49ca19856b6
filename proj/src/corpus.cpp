#include "lexinf/corpus.hpp"

#include "lexinf/errors.hpp"
#include "lexinf/numeric.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_set>

namespace lexinf::corpus {

namespace {

// Length in bytes of the UTF-8 sequence starting with lead byte b. Invalid
// lead bytes are treated as single-byte units.
std::size_t utf8_length(unsigned char b)
{
    if (b < 0x80)
        return 1;
    if ((b >> 5) == 0x6)
        return 2;
    if ((b >> 4) == 0xE)
        return 3;
    if ((b >> 3) == 0x1E)
        return 4;
    return 1;
}

std::string trim(const std::string& s)
{
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

} // namespace

std::string normalize_elongation(std::string_view token)
{
    std::string out;
    out.reserve(token.size());
    std::string_view prev;
    int run = 0;
    std::size_t pos = 0;
    while (pos < token.size()) {
        std::size_t len = std::min(utf8_length(static_cast<unsigned char>(token[pos])), token.size() - pos);
        std::string_view cp = token.substr(pos, len);
        run = (cp == prev) ? run + 1 : 1;
        if (run <= 2)
            out.append(cp);
        prev = cp;
        pos += len;
    }
    return out;
}

bool keep_message(const MessageRecord& record)
{
    if (record.is_retweet || record.has_url)
        return false;
    return std::find(record.tokens.begin(), record.tokens.end(), "RT") == record.tokens.end();
}

std::vector<MessageRecord> filter_messages(std::vector<MessageRecord> records)
{
    std::erase_if(records, [](const MessageRecord& r) { return !keep_message(r); });
    return records;
}

std::vector<std::string> filter_authors(const std::vector<MessageRecord>& records, int min_messages,
                                        int max_messages)
{
    std::unordered_map<std::string, int> counts;
    for (const auto& r : records)
        ++counts[r.author_id];
    std::vector<std::string> kept;
    for (const auto& [author, n] : counts)
        if (n >= min_messages && n <= max_messages)
            kept.push_back(author);
    std::sort(kept.begin(), kept.end());
    return kept;
}

int assign_region(const std::vector<std::pair<double, double>>& locations,
                  const std::vector<RegionCentroid>& centroids)
{
    if (centroids.empty())
        throw UsageError("no region centroids configured");
    if (locations.empty())
        throw DataError("cannot assign a region without any message location");
    double lat = 0.0, lon = 0.0;
    for (auto [la, lo] : locations) {
        lat += la;
        lon += lo;
    }
    lat /= static_cast<double>(locations.size());
    lon /= static_cast<double>(locations.size());

    int best = -1;
    double best_dist = std::numeric_limits<double>::infinity();
    for (const auto& c : centroids) {
        double d = haversine_km(lat, lon, c.latitude, c.longitude);
        if (d < best_dist || (d == best_dist && c.region_id < best)) {
            best_dist = d;
            best = c.region_id;
        }
    }
    return best;
}

std::optional<int> bin_weeks(std::int64_t timestamp, std::int64_t origin)
{
    if (timestamp < origin)
        return std::nullopt;
    return static_cast<int>((timestamp - origin) / kSecondsPerWeek);
}

std::vector<std::string> select_vocabulary(const std::unordered_map<std::string, TokenTally>& tallies,
                                           std::size_t top_n, int min_peak_count)
{
    std::vector<std::pair<std::string, const TokenTally*>> ranked;
    ranked.reserve(tallies.size());
    for (const auto& [word, tally] : tallies) {
        if (word.empty() || word.front() == '#' || word.front() == '@')
            continue;
        ranked.emplace_back(word, &tally);
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second->total_frequency != b.second->total_frequency)
            return a.second->total_frequency > b.second->total_frequency;
        return a.first < b.first;
    });
    if (ranked.size() > top_n)
        ranked.resize(top_n);
    std::vector<std::string> vocab;
    for (const auto& [word, tally] : ranked)
        if (tally->peak_author_count > min_peak_count)
            vocab.push_back(word);
    return vocab;
}

CountsPanel build_counts_panel(const std::vector<MessageRecord>& records,
                               const std::unordered_map<std::string, int>& author_region,
                               const std::vector<std::string>& vocab,
                               const std::vector<RegionCentroid>& centroids, std::int64_t origin, int weeks,
                               IngestStats* stats)
{
    const int R = static_cast<int>(centroids.size());
    CountsPanel panel(static_cast<int>(vocab.size()), R, weeks);
    panel.vocab = vocab;
    for (int r = 0; r < R; ++r) {
        panel.region_ids[r] = centroids[r].region_id;
        panel.region_names[r] = centroids[r].name;
    }
    panel.week_start = format_iso_date(origin);

    std::unordered_map<std::string, int> word_index;
    for (int i = 0; i < static_cast<int>(vocab.size()); ++i)
        word_index.emplace(vocab[i], i);

    // Distinct (author, week) and (author, word, week) keys; region is fixed per author.
    std::set<std::pair<std::string, int>> posted;
    std::set<std::tuple<std::string, int, int>> used;
    for (const auto& rec : records) {
        auto it = author_region.find(rec.author_id);
        if (it == author_region.end())
            continue;
        int r = it->second;
        auto week = bin_weeks(rec.timestamp, origin);
        if (!week) {
            if (stats)
                ++stats->records_before_origin;
            continue;
        }
        if (*week >= weeks || r < 0 || r >= R) {
            if (stats)
                ++stats->records_out_of_range;
            continue;
        }
        if (posted.emplace(rec.author_id, *week).second)
            ++panel.s(r, *week);
        for (const auto& tok : rec.tokens) {
            auto w = word_index.find(tok);
            if (w == word_index.end())
                continue;
            if (used.emplace(rec.author_id, w->second, *week).second)
                ++panel.c(w->second, r, *week);
        }
    }
    return panel;
}

CountsPanel ingest(std::vector<MessageRecord> records, const std::vector<RegionCentroid>& centroids_in,
                   const CorpusOptions& options, IngestStats& stats)
{
    if (centroids_in.empty())
        throw UsageError("no region centroids configured");
    auto centroids = centroids_in;
    std::sort(centroids.begin(), centroids.end(),
              [](const auto& a, const auto& b) { return a.region_id < b.region_id; });
    for (int r = 0; r < static_cast<int>(centroids.size()); ++r)
        if (centroids[r].region_id != r)
            throw DataError("region ids must be dense and unique starting at 0");

    std::size_t before = records.size();
    records = filter_messages(std::move(records));
    stats.dropped_messages += before - records.size();
    for (auto& rec : records)
        for (auto& tok : rec.tokens)
            tok = normalize_elongation(tok);

    {
        std::unordered_set<std::string> all;
        for (const auto& rec : records)
            all.insert(rec.author_id);
        stats.authors_seen = all.size();
    }
    auto kept = filter_authors(records, options.min_author_messages, options.max_author_messages);
    stats.authors_kept = kept.size();
    stats.authors_dropped = stats.authors_seen - kept.size();
    std::unordered_set<std::string> kept_set(kept.begin(), kept.end());
    std::erase_if(records, [&](const MessageRecord& r) { return !kept_set.contains(r.author_id); });

    std::unordered_map<std::string, std::vector<std::pair<double, double>>> locations;
    for (const auto& rec : records)
        locations[rec.author_id].emplace_back(rec.latitude, rec.longitude);
    std::unordered_map<std::string, int> author_region;
    for (const auto& [author, locs] : locations)
        author_region.emplace(author, assign_region(locs, centroids));

    if (records.empty()) {
        stats.warnings.push_back("no records survived filtering; panel is empty");
        CountsPanel panel(0, static_cast<int>(centroids.size()), options.weeks.value_or(0));
        for (int r = 0; r < panel.regions(); ++r) {
            panel.region_ids[r] = centroids[r].region_id;
            panel.region_names[r] = centroids[r].name;
        }
        if (options.origin)
            panel.week_start = format_iso_date(*options.origin);
        return panel;
    }

    std::int64_t origin = 0;
    if (options.origin) {
        origin = *options.origin;
    } else {
        std::int64_t first = std::numeric_limits<std::int64_t>::max();
        for (const auto& rec : records)
            first = std::min(first, rec.timestamp);
        origin = first - (((first % 86400) + 86400) % 86400);
    }
    int weeks = 0;
    if (options.weeks) {
        weeks = *options.weeks;
    } else {
        for (const auto& rec : records)
            if (auto w = bin_weeks(rec.timestamp, origin))
                weeks = std::max(weeks, *w + 1);
    }

    // Token frequency and per-cell distinct-author usage for every candidate.
    std::unordered_map<std::string, TokenTally> tallies;
    std::unordered_map<std::string, std::unordered_map<std::int64_t, int>> cell_counts;
    std::set<std::tuple<std::string, std::string, int>> seen;
    for (const auto& rec : records) {
        auto week = bin_weeks(rec.timestamp, origin);
        if (!week || *week >= weeks)
            continue;
        int r = author_region.at(rec.author_id);
        for (const auto& tok : rec.tokens) {
            ++tallies[tok].total_frequency;
            if (seen.emplace(rec.author_id, tok, *week).second) {
                std::int64_t key = static_cast<std::int64_t>(r) * weeks + *week;
                int& n = cell_counts[tok][key];
                ++n;
                auto& peak = tallies[tok].peak_author_count;
                peak = std::max(peak, n);
            }
        }
    }
    stats.vocab_candidates = tallies.size();
    auto vocab = select_vocabulary(tallies, options.top_n, options.min_peak_count);
    if (vocab.empty())
        stats.warnings.push_back("vocabulary is empty after selection");
    stats.vocab_size = vocab.size();

    auto panel = build_counts_panel(records, author_region, vocab, centroids, origin, weeks, &stats);
    if (stats.records_before_origin > 0)
        stats.warnings.push_back(std::to_string(stats.records_before_origin) + " records precede the origin");
    if (stats.records_out_of_range > 0)
        stats.warnings.push_back(std::to_string(stats.records_out_of_range) + " records fall outside the week range");
    return panel;
}

std::vector<MessageRecord> read_messages_jsonl(std::istream& in, IngestStats& stats)
{
    std::vector<MessageRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty())
            continue;
        ++stats.records_read;
        try {
            auto j = nlohmann::json::parse(line);
            MessageRecord rec;
            const auto& author = j.at("author");
            rec.author_id = author.is_string() ? author.get<std::string>() : author.dump();
            rec.latitude = j.at("lat").get<double>();
            rec.longitude = j.at("lon").get<double>();
            rec.timestamp = j.at("ts").get<std::int64_t>();
            rec.tokens = j.at("tokens").get<std::vector<std::string>>();
            rec.is_retweet = j.value("rt", false);
            rec.has_url = j.value("url", false);
            if (rec.latitude < -90 || rec.latitude > 90 || rec.longitude < -180 || rec.longitude > 180)
                throw DataError("coordinates out of range");
            out.push_back(std::move(rec));
        } catch (const std::exception&) {
            ++stats.malformed_lines;
        }
    }
    return out;
}

std::vector<RegionCentroid> read_centroids_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot read centroids file " + path.string());
    std::string line;
    std::getline(in, line);
    if (trim(line) != "region_id,name,lat,lon")
        throw DataError("centroids header must be region_id,name,lat,lon");
    std::vector<RegionCentroid> out;
    while (std::getline(in, line)) {
        if (trim(line).empty())
            continue;
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ss(line);
        while (std::getline(ss, cell, ','))
            cells.push_back(trim(cell));
        if (cells.size() != 4)
            throw DataError("bad centroid row: " + line);
        try {
            out.push_back({std::stoi(cells[0]), cells[1], std::stod(cells[2]), std::stod(cells[3])});
        } catch (const std::exception&) {
            throw DataError("bad centroid row: " + line);
        }
    }
    return out;
}

std::int64_t parse_iso_date(const std::string& date)
{
    int y = 0;
    unsigned m = 0, d = 0;
    char dash1 = 0, dash2 = 0;
    std::istringstream ss(date);
    ss >> y >> dash1 >> m >> dash2 >> d;
    using namespace std::chrono;
    year_month_day ymd{year{y}, month{m}, day{d}};
    if (!ss || dash1 != '-' || dash2 != '-' || !ymd.ok() || !ss.eof())
        throw UsageError("expected a YYYY-MM-DD date, got '" + date + "'");
    return duration_cast<seconds>(sys_days{ymd}.time_since_epoch()).count();
}

std::string format_iso_date(std::int64_t epoch_seconds)
{
    using namespace std::chrono;
    auto days_since = floor<days>(sys_seconds{seconds{epoch_seconds}});
    year_month_day ymd{days_since};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

} // namespace lexinf::corpus
