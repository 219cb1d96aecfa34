#include "simprob/trace.hpp"

#include <charconv>

#include "simprob/errors.hpp"

namespace simprob {

std::string Address::path_string() const
{
    std::string out;
    for (std::size_t i = 0; i < path.size(); ++i) {
        if (i != 0) out += '/';
        out += path[i];
    }
    return out;
}

std::string Address::stripped() const
{
    return path_string() + ':' + family_tag;
}

std::string Address::render() const
{
    return stripped() + '#' + std::to_string(instance);
}

Address parse_address(const std::string & rendered)
{
    const auto colon = rendered.rfind(':');
    const auto hash = rendered.rfind('#');
    if (colon == std::string::npos || hash == std::string::npos || hash < colon || colon == 0) {
        throw InvalidParameter("not a rendered address: '" + rendered + "'");
    }
    Address a;
    std::size_t start = 0;
    const std::string path = rendered.substr(0, colon);
    while (true) {
        const auto slash = path.find('/', start);
        a.path.push_back(path.substr(start, slash - start));
        if (slash == std::string::npos) break;
        start = slash + 1;
    }
    a.family_tag = rendered.substr(colon + 1, hash - colon - 1);
    const char * first = rendered.data() + hash + 1;
    const char * last = rendered.data() + rendered.size();
    auto [ptr, ec] = std::from_chars(first, last, a.instance);
    if (ec != std::errc{} || ptr != last || first == last) {
        throw InvalidParameter("bad instance counter in address '" + rendered + "'");
    }
    return a;
}

std::string strip_instance(const std::string & rendered)
{
    const auto hash = rendered.rfind('#');
    return hash == std::string::npos ? rendered : rendered.substr(0, hash);
}

Address CounterTable::extend(const std::vector<std::string> & parent, const std::string & site_id,
                             const std::string & family_tag)
{
    if (site_id.empty()) throw InvalidParameter("site_id must be non-empty");
    if (site_id.find_first_of("/:#") != std::string::npos) {
        throw InvalidParameter("site_id '" + site_id + "' contains a reserved character (/ : #)");
    }
    Address a;
    a.path = parent;
    a.path.push_back(site_id);
    a.family_tag = family_tag;

    const std::string path = a.path_string();
    auto & count = counts_[{path, family_tag}];
    a.instance = count;

    auto [slot, inserted] = slots_.try_emplace({path, a.instance}, family_tag);
    if (!inserted && slot->second != family_tag) {
        throw AddressFamilyMismatch("address slot '" + path + "#" + std::to_string(a.instance) +
                                    "' was issued as " + slot->second + ", now requested as " + family_tag);
    }
    ++count;
    return a;
}

void CounterTable::clear()
{
    counts_.clear();
    slots_.clear();
}

double trace_log_weight(const Trace & trace)
{
    double lw = 0.0;
    for (const auto & o : trace.observes) lw += o.log_likelihood;
    for (const auto & e : trace.entries) lw += e.log_p - e.log_q;
    return lw;
}

} // namespace simprob
