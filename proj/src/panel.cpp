#include "lexinf/panel.hpp"

#include "lexinf/errors.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

namespace fs = std::filesystem;

namespace lexinf {

CountsPanel::CountsPanel(int words, int regions, int weeks)
    : words_(words), regions_(regions), weeks_(weeks),
      counts_(static_cast<std::size_t>(words) * regions * weeks, 0),
      exposure_(static_cast<std::size_t>(regions) * weeks, 0)
{
    if (words < 0 || regions < 0 || weeks < 0)
        throw UsageError("panel dimensions must be non-negative");
    vocab.resize(words);
    region_ids.resize(regions);
    region_names.resize(regions);
    for (int r = 0; r < regions; ++r) {
        region_ids[r] = r;
        region_names[r] = "region" + std::to_string(r);
    }
}

void CountsPanel::validate() const
{
    if (static_cast<int>(vocab.size()) != words_)
        throw DataError("vocab size does not match panel word dimension");
    if (static_cast<int>(region_ids.size()) != regions_ || static_cast<int>(region_names.size()) != regions_)
        throw DataError("region labels do not match panel region dimension");
    for (int r = 0; r < regions_; ++r)
        for (int t = 0; t < weeks_; ++t) {
            if (s(r, t) < 0)
                throw DataError("negative exposure count");
            for (int i = 0; i < words_; ++i) {
                auto v = c(i, r, t);
                if (v < 0 || v > s(r, t))
                    throw DataError("count out of range at word " + std::to_string(i) + ", region "
                                    + std::to_string(r) + ", week " + std::to_string(t));
            }
        }
}

namespace {

std::ofstream open_out(const fs::path& p)
{
    std::ofstream out(p, std::ios::binary);
    if (!out)
        throw DataError("cannot write " + p.string());
    return out;
}

std::ifstream open_in(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    if (!in)
        throw DataError("cannot read " + p.string());
    return in;
}

std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ','))
        out.push_back(cell);
    if (!line.empty() && line.back() == ',')
        out.emplace_back();
    return out;
}

int to_int(const std::string& s, const fs::path& file)
{
    try {
        std::size_t pos = 0;
        int v = std::stoi(s, &pos);
        if (pos != s.size())
            throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw DataError("bad integer '" + s + "' in " + file.string());
    }
}

} // namespace

void write_panel(const CountsPanel& panel, const fs::path& dir)
{
    fs::create_directories(dir);
    {
        auto out = open_out(dir / "vocab.txt");
        for (const auto& w : panel.vocab)
            out << w << '\n';
    }
    {
        auto out = open_out(dir / "regions.csv");
        out << "region_idx,region_id,name\n";
        for (int r = 0; r < panel.regions(); ++r)
            out << r << ',' << panel.region_ids[r] << ',' << panel.region_names[r] << '\n';
    }
    {
        nlohmann::json meta = {{"format", "lexinf-panel"},
                               {"format_version", kFormatVersion},
                               {"V", panel.words()},
                               {"R", panel.regions()},
                               {"T", panel.weeks()},
                               {"origin", panel.week_start}};
        auto out = open_out(dir / "meta.json");
        out << meta.dump(2) << '\n';
    }
    {
        auto out = open_out(dir / "counts.csv");
        out << "word_idx,region_idx,week_idx,count\n";
        for (int i = 0; i < panel.words(); ++i)
            for (int r = 0; r < panel.regions(); ++r)
                for (int t = 0; t < panel.weeks(); ++t)
                    if (auto v = panel.c(i, r, t); v != 0)
                        out << i << ',' << r << ',' << t << ',' << v << '\n';
    }
    {
        auto out = open_out(dir / "exposure.csv");
        out << "region_idx,week_idx,count\n";
        for (int r = 0; r < panel.regions(); ++r)
            for (int t = 0; t < panel.weeks(); ++t)
                out << r << ',' << t << ',' << panel.s(r, t) << '\n';
    }
}

CountsPanel read_panel(const fs::path& dir)
{
    if (!fs::is_directory(dir))
        throw DataError("panel directory not found: " + dir.string());
    nlohmann::json meta;
    {
        auto in = open_in(dir / "meta.json");
        try {
            in >> meta;
        } catch (const nlohmann::json::exception& e) {
            throw DataError(std::string("bad meta.json: ") + e.what());
        }
    }
    int V = meta.at("V").get<int>();
    int R = meta.at("R").get<int>();
    int T = meta.at("T").get<int>();
    CountsPanel panel(V, R, T);
    panel.week_start = meta.value("origin", std::string{});

    {
        auto in = open_in(dir / "vocab.txt");
        std::string line;
        int i = 0;
        while (std::getline(in, line)) {
            if (i >= V)
                throw DataError("vocab.txt has more lines than V");
            panel.vocab[i++] = line;
        }
        if (i != V)
            throw DataError("vocab.txt has fewer lines than V");
    }
    {
        auto p = dir / "regions.csv";
        auto in = open_in(p);
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            if (line.empty())
                continue;
            auto cells = split_csv(line);
            if (cells.size() < 3)
                throw DataError("bad row in " + p.string());
            int r = to_int(cells[0], p);
            if (r < 0 || r >= R)
                throw DataError("region_idx out of range in " + p.string());
            panel.region_ids[r] = to_int(cells[1], p);
            panel.region_names[r] = cells[2];
        }
    }
    {
        auto p = dir / "counts.csv";
        auto in = open_in(p);
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            if (line.empty())
                continue;
            auto cells = split_csv(line);
            if (cells.size() != 4)
                throw DataError("bad row in " + p.string());
            int i = to_int(cells[0], p), r = to_int(cells[1], p), t = to_int(cells[2], p);
            if (i < 0 || i >= V || r < 0 || r >= R || t < 0 || t >= T)
                throw DataError("index out of range in " + p.string());
            panel.c(i, r, t) = to_int(cells[3], p);
        }
    }
    {
        auto p = dir / "exposure.csv";
        auto in = open_in(p);
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            if (line.empty())
                continue;
            auto cells = split_csv(line);
            if (cells.size() != 3)
                throw DataError("bad row in " + p.string());
            int r = to_int(cells[0], p), t = to_int(cells[1], p);
            if (r < 0 || r >= R || t < 0 || t >= T)
                throw DataError("index out of range in " + p.string());
            panel.s(r, t) = to_int(cells[2], p);
        }
    }
    panel.validate();
    return panel;
}

} // namespace lexinf
