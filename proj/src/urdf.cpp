#include "fkdiff/urdf.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "fkdiff/error.hpp"

namespace fkdiff {

namespace pt = boost::property_tree;

std::size_t dof(JointType type) {
    switch (type) {
        case JointType::Fixed: return 0;
        case JointType::Revolute:
        case JointType::Continuous:
        case JointType::Prismatic: return 1;
        case JointType::Planar: return 2;
        case JointType::Floating: return 6;
    }
    return 0;
}

std::string_view to_string(JointType type) {
    switch (type) {
        case JointType::Revolute: return "revolute";
        case JointType::Continuous: return "continuous";
        case JointType::Prismatic: return "prismatic";
        case JointType::Fixed: return "fixed";
        case JointType::Planar: return "planar";
        case JointType::Floating: return "floating";
    }
    return "unknown";
}

std::optional<JointType> joint_type_from_string(std::string_view name) {
    static const std::map<std::string_view, JointType> table = {
        {"revolute", JointType::Revolute}, {"continuous", JointType::Continuous},
        {"prismatic", JointType::Prismatic}, {"fixed", JointType::Fixed},
        {"planar", JointType::Planar}, {"floating", JointType::Floating},
    };
    auto it = table.find(name);
    if (it == table.end()) return std::nullopt;
    return it->second;
}

Transform4<double> Joint::origin() const {
    return sixdof_to_transform(SixDofParams<double>{
        {origin_xyz[0], origin_xyz[1], origin_xyz[2], origin_rpy[0], origin_rpy[1], origin_rpy[2]}});
}

const Joint* RobotModel::parent_joint(std::string_view link) const {
    for (const auto& j : joints)
        if (j.child_link == link) return &j;
    return nullptr;
}

std::vector<const Joint*> RobotModel::child_joints(std::string_view link) const {
    std::vector<const Joint*> out;
    for (const auto& j : joints)
        if (j.parent_link == link) out.push_back(&j);
    return out;
}

bool RobotModel::has_link(std::string_view link) const {
    return std::any_of(links.begin(), links.end(), [&](const Link& l) { return l.name == link; });
}

const Joint* RobotModel::find_joint(std::string_view name) const {
    for (const auto& j : joints)
        if (j.name == name) return &j;
    return nullptr;
}

std::size_t RobotModel::total_dof() const {
    std::size_t total = 0;
    for (const auto& j : joints) total += dof(j.type);
    return total;
}

std::size_t KinematicChain::dof() const {
    std::size_t total = 0;
    for (const auto& s : segments)
        if (!s.joint.trainable_init) total += fkdiff::dof(s.joint.type);
    return total;
}

std::size_t KinematicChain::trainable_count() const {
    return static_cast<std::size_t>(
        std::count_if(segments.begin(), segments.end(), [](const ChainSegment& s) { return s.joint.trainable_init.has_value(); }));
}

namespace {

std::string in_quotes(std::string_view s) { return "'" + std::string(s) + "'"; }

Vec3 parse_triple(const std::string& text, const std::string& where) {
    Vec3 out{};
    const char* p = text.data();
    const char* end = text.data() + text.size();
    std::size_t count = 0;
    while (true) {
        while (p != end && std::isspace(static_cast<unsigned char>(*p))) ++p;
        if (p == end) break;
        if (count == 3) throw ParseError(where + ": expected exactly three numbers, got " + in_quotes(text));
        auto [next, ec] = std::from_chars(p, end, out[count]);
        if (ec != std::errc() || (next != end && !std::isspace(static_cast<unsigned char>(*next))))
            throw ParseError(where + ": invalid number in " + in_quotes(text));
        if (!std::isfinite(out[count])) throw ParseError(where + ": non-finite number in " + in_quotes(text));
        p = next;
        ++count;
    }
    if (count != 3) throw ParseError(where + ": expected exactly three numbers, got " + in_quotes(text));
    return out;
}

double parse_number(const std::string& text, const std::string& where) {
    double v = 0.0;
    auto first = text.find_first_not_of(" \t\n\r");
    auto last = text.find_last_not_of(" \t\n\r");
    if (first == std::string::npos) throw ParseError(where + ": empty number");
    auto [next, ec] = std::from_chars(text.data() + first, text.data() + last + 1, v);
    if (ec != std::errc() || next != text.data() + last + 1 || !std::isfinite(v))
        throw ParseError(where + ": invalid number " + in_quotes(text));
    return v;
}

std::optional<std::string> attribute(const pt::ptree& node, const char* name) {
    if (auto v = node.get_optional<std::string>(std::string("<xmlattr>.") + name)) return *v;
    return std::nullopt;
}

bool needs_axis(JointType t) {
    return t == JointType::Revolute || t == JointType::Continuous || t == JointType::Prismatic ||
           t == JointType::Planar;
}

Joint parse_joint(const pt::ptree& node) {
    Joint joint;
    auto name = attribute(node, "name");
    if (!name || name->empty()) throw ParseError("<joint>: missing name attribute");
    joint.name = *name;
    const std::string where = "joint " + in_quotes(joint.name);

    auto type = attribute(node, "type");
    if (!type) throw ParseError(where + ": missing type attribute");
    auto parsed_type = joint_type_from_string(*type);
    if (!parsed_type) throw ParseError(where + ": unknown joint type " + in_quotes(*type));
    joint.type = *parsed_type;

    bool have_parent = false, have_child = false;
    for (const auto& [tag, child] : node) {
        if (tag == "parent") {
            if (have_parent) throw ParseError(where + ": more than one <parent>");
            auto link = attribute(child, "link");
            if (!link || link->empty()) throw ParseError(where + ": <parent> without link attribute");
            joint.parent_link = *link;
            have_parent = true;
        } else if (tag == "child") {
            if (have_child) throw ParseError(where + ": more than one <child>");
            auto link = attribute(child, "link");
            if (!link || link->empty()) throw ParseError(where + ": <child> without link attribute");
            joint.child_link = *link;
            have_child = true;
        } else if (tag == "origin") {
            if (auto xyz = attribute(child, "xyz")) joint.origin_xyz = parse_triple(*xyz, where + " <origin xyz>");
            if (auto rpy = attribute(child, "rpy")) joint.origin_rpy = parse_triple(*rpy, where + " <origin rpy>");
        } else if (tag == "axis") {
            if (auto xyz = attribute(child, "xyz")) joint.axis = parse_triple(*xyz, where + " <axis xyz>");
        } else if (tag == "limit") {
            auto lower = attribute(child, "lower");
            auto upper = attribute(child, "upper");
            if (joint.type != JointType::Continuous && (lower || upper)) {
                JointLimits lim;
                if (lower) lim.lower = parse_number(*lower, where + " <limit lower>");
                if (upper) lim.upper = parse_number(*upper, where + " <limit upper>");
                if (lim.lower > lim.upper) throw ParseError(where + ": limit lower exceeds upper");
                joint.limits = lim;
            }
        }
    }
    if (!have_parent) throw ParseError(where + ": missing <parent>");
    if (!have_child) throw ParseError(where + ": missing <child>");

    const double norm = std::sqrt(joint.axis[0] * joint.axis[0] + joint.axis[1] * joint.axis[1] +
                                  joint.axis[2] * joint.axis[2]);
    if (norm < 1e-12) {
        if (needs_axis(joint.type)) throw ParseError(where + ": zero-length axis");
        joint.axis = {1.0, 0.0, 0.0};
    } else if (std::fabs(norm - 1.0) > 4 * std::numeric_limits<double>::epsilon()) {
        // left alone when already unit so parse(serialize(m)) == m
        for (double& a : joint.axis) a /= norm;
    }
    return joint;
}

std::string format_number(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, end);
}

std::string format_triple(const Vec3& v) {
    return format_number(v[0]) + " " + format_number(v[1]) + " " + format_number(v[2]);
}

std::string xml_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string unique_name(std::string base, const std::set<std::string>& taken) {
    std::string name = base;
    for (int i = 2; taken.count(name); ++i) name = base + "_" + std::to_string(i);
    return name;
}

}  // namespace

void validate_model(const RobotModel& model) {
    if (model.links.empty()) throw ParseError("robot " + in_quotes(model.name) + ": no <link> elements");

    std::set<std::string> link_names;
    for (const auto& l : model.links)
        if (!link_names.insert(l.name).second) throw ParseError("link " + in_quotes(l.name) + ": duplicate name");

    std::set<std::string> joint_names;
    for (const auto& j : model.joints)
        if (!joint_names.insert(j.name).second) throw ParseError("joint " + in_quotes(j.name) + ": duplicate name");

    std::unordered_map<std::string, const Joint*> parent_of;
    for (const auto& j : model.joints) {
        const std::string where = "joint " + in_quotes(j.name);
        for (const auto* end : {&j.parent_link, &j.child_link}) {
            if (link_names.count(*end)) continue;
            if (joint_names.count(*end))
                throw ParseError(where + ": references joint " + in_quotes(*end) +
                                 " as a link; a joint must be followed by a link");
            throw ParseError(where + ": references undeclared link " + in_quotes(*end));
        }
        if (j.parent_link == j.child_link) throw ParseError(where + ": parent and child are the same link (cycle)");
        auto [it, inserted] = parent_of.emplace(j.child_link, &j);
        if (!inserted)
            throw ParseError("link " + in_quotes(j.child_link) + ": has two parent joints, " + in_quotes(it->second->name) +
                             " and " + in_quotes(j.name));
        if (j.limits && j.limits->lower > j.limits->upper) throw ParseError(where + ": limit lower exceeds upper");
    }

    std::vector<std::string> roots;
    for (const auto& l : model.links)
        if (!parent_of.count(l.name)) roots.push_back(l.name);
    if (roots.empty()) throw ParseError("robot " + in_quotes(model.name) + ": no root link (cyclic joint graph)");
    if (roots.size() > 1)
        throw ParseError("robot " + in_quotes(model.name) + ": disconnected tree, links " + in_quotes(roots[0]) + " and " +
                         in_quotes(roots[1]) + " both lack a parent joint");
    if (!model.root_link.empty() && model.root_link != roots[0])
        throw ParseError("robot " + in_quotes(model.name) + ": recorded root " + in_quotes(model.root_link) +
                         " differs from actual root " + in_quotes(roots[0]));

    // Every link has at most one parent and there is one root, so any link not
    // reachable from the root sits on a cycle.
    std::unordered_map<std::string, std::vector<const Joint*>> children;
    for (const auto& j : model.joints) children[j.parent_link].push_back(&j);
    std::set<std::string> seen{roots[0]};
    std::vector<std::string> stack{roots[0]};
    while (!stack.empty()) {
        std::string link = std::move(stack.back());
        stack.pop_back();
        for (const Joint* j : children[link])
            if (seen.insert(j->child_link).second) stack.push_back(j->child_link);
    }
    for (const auto& l : model.links)
        if (!seen.count(l.name)) throw ParseError("link " + in_quotes(l.name) + ": part of a cycle, unreachable from root");
}

RobotModel parse_urdf(std::string_view xml_text) {
    pt::ptree tree;
    try {
        std::istringstream in{std::string(xml_text)};
        pt::read_xml(in, tree);
    } catch (const pt::xml_parser_error& e) {
        throw ParseError(std::string("malformed XML: ") + e.message() + " (line " + std::to_string(e.line()) + ")");
    }
    auto robot = tree.get_child_optional("robot");
    if (!robot) throw ParseError("missing <robot> root element");

    RobotModel model;
    model.name = attribute(*robot, "name").value_or("");
    for (const auto& [tag, node] : *robot) {
        if (tag == "link") {
            auto name = attribute(node, "name");
            if (!name || name->empty()) throw ParseError("<link>: missing name attribute");
            model.links.push_back(Link{*name});
        } else if (tag == "joint") {
            model.joints.push_back(parse_joint(node));
        }
        // visual, collision, inertial, transmission, gazebo, material, ... are ignored
    }
    validate_model(model);
    for (const auto& l : model.links) {
        if (!model.parent_joint(l.name)) {
            model.root_link = l.name;
            break;
        }
    }
    return model;
}

RobotModel load_urdf(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_urdf(buffer.str());
}

std::string serialize_urdf(const RobotModel& model) {
    std::ostringstream out;
    out << "<?xml version=\"1.0\"?>\n";
    out << "<robot name=\"" << xml_escape(model.name) << "\">\n";
    for (const auto& l : model.links) out << "  <link name=\"" << xml_escape(l.name) << "\"/>\n";
    for (const auto& j : model.joints) {
        out << "  <joint name=\"" << xml_escape(j.name) << "\" type=\"" << to_string(j.type) << "\">\n";
        out << "    <parent link=\"" << xml_escape(j.parent_link) << "\"/>\n";
        out << "    <child link=\"" << xml_escape(j.child_link) << "\"/>\n";
        out << "    <origin xyz=\"" << format_triple(j.origin_xyz) << "\" rpy=\"" << format_triple(j.origin_rpy)
            << "\"/>\n";
        out << "    <axis xyz=\"" << format_triple(j.axis) << "\"/>\n";
        if (j.limits)
            out << "    <limit lower=\"" << format_number(j.limits->lower) << "\" upper=\""
                << format_number(j.limits->upper) << "\"/>\n";
        out << "  </joint>\n";
    }
    out << "</robot>\n";
    return out.str();
}

KinematicChain extract_chain(const RobotModel& model, std::string_view base_link, std::string_view end_link) {
    if (!model.has_link(base_link)) throw ChainError("unknown base link " + in_quotes(base_link));
    if (!model.has_link(end_link)) throw ChainError("unknown end link " + in_quotes(end_link));

    KinematicChain chain;
    chain.base_link = std::string(base_link);
    chain.end_link = std::string(end_link);
    std::string current(end_link);
    while (current != base_link) {
        const Joint* j = model.parent_joint(current);
        if (!j)
            throw ChainError("end link " + in_quotes(end_link) + " is not reachable downward from base link " +
                             in_quotes(base_link));
        chain.segments.push_back(ChainSegment{Link{j->parent_link}, *j});
        current = j->parent_link;
    }
    std::reverse(chain.segments.begin(), chain.segments.end());
    return chain;
}

std::vector<KinematicChain> leaf_chains(const RobotModel& model) {
    std::vector<std::string> leaves;
    for (const auto& l : model.links)
        if (model.child_joints(l.name).empty()) leaves.push_back(l.name);
    std::sort(leaves.begin(), leaves.end());
    std::vector<KinematicChain> out;
    for (const auto& leaf : leaves) out.push_back(extract_chain(model, model.root_link, leaf));
    return out;
}

std::string substituted_joint_name(const RobotModel& original, std::string_view target_link) {
    if (!original.has_link(target_link)) throw ChainError("unknown link " + in_quotes(target_link));
    const Joint* pj = original.parent_joint(target_link);
    if (!pj) throw ChainError("link " + in_quotes(target_link) + " is the root and has no parent joint");
    if (pj->type == JointType::Fixed) return pj->name;
    std::set<std::string> taken;
    for (const auto& j : original.joints) taken.insert(j.name);
    return unique_name(pj->name + "_offset", taken);
}

RobotModel substitute_link_with_joint(const RobotModel& model, std::string_view target_link) {
    const std::string joint_name = substituted_joint_name(model, target_link);
    RobotModel out = model;
    auto it = std::find_if(out.joints.begin(), out.joints.end(),
                           [&](const Joint& j) { return j.child_link == target_link; });
    Joint& pj = *it;
    const SixDofParams<double> init{{pj.origin_xyz[0], pj.origin_xyz[1], pj.origin_xyz[2], pj.origin_rpy[0],
                                     pj.origin_rpy[1], pj.origin_rpy[2]}};

    if (pj.type == JointType::Fixed) {
        pj.type = JointType::Floating;
        pj.origin_xyz = {};
        pj.origin_rpy = {};
        pj.limits.reset();
        pj.trainable_init = init;
        return out;
    }

    std::set<std::string> link_names;
    for (const auto& l : out.links) link_names.insert(l.name);
    const std::string offset_link = unique_name(std::string(target_link) + "_offset", link_names);

    Joint floating;
    floating.name = joint_name;
    floating.type = JointType::Floating;
    floating.parent_link = pj.parent_link;
    floating.child_link = offset_link;
    floating.trainable_init = init;

    pj.parent_link = offset_link;
    pj.origin_xyz = {};
    pj.origin_rpy = {};

    out.joints.insert(it, floating);
    out.links.push_back(Link{offset_link});
    validate_model(out);
    return out;
}

}  // namespace fkdiff
