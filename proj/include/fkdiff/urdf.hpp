#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fkdiff/transforms.hpp"

namespace fkdiff {

enum class JointType { Revolute, Continuous, Prismatic, Fixed, Planar, Floating };

/// Degrees of freedom a joint contributes to a configuration vector.
std::size_t dof(JointType type);
std::string_view to_string(JointType type);
std::optional<JointType> joint_type_from_string(std::string_view name);

using Vec3 = std::array<double, 3>;

struct JointLimits {
    double lower = 0.0;
    double upper = 0.0;
    bool operator==(const JointLimits&) const = default;
};

struct Joint {
    std::string name;
    JointType type = JointType::Fixed;
    std::string parent_link;
    std::string child_link;
    Vec3 origin_xyz{};
    Vec3 origin_rpy{};
    Vec3 axis{1.0, 0.0, 0.0};
    std::optional<JointLimits> limits;
    /// Set on Floating joints created by substitute_link_with_joint. Such a
    /// joint is trainable: its six parameters come from the engine's parameter
    /// vector instead of the configuration batch, starting from this value.
    std::optional<SixDofParams<double>> trainable_init;

    Transform4<double> origin() const;
    bool operator==(const Joint&) const = default;
};

struct Link {
    std::string name;
    bool operator==(const Link&) const = default;
};

/// Validated kinematic tree: one root, every other link has exactly one
/// parent joint, no cycles. Immutable once built by parse_urdf.
struct RobotModel {
    std::string name;
    std::vector<Link> links;
    std::vector<Joint> joints;
    std::string root_link;

    const Joint* parent_joint(std::string_view link) const;
    std::vector<const Joint*> child_joints(std::string_view link) const;
    bool has_link(std::string_view link) const;
    const Joint* find_joint(std::string_view name) const;
    std::size_t total_dof() const;

    bool operator==(const RobotModel&) const = default;
};

/// One link-then-joint step of a chain: the joint's origin is the link
/// transform, its motion the joint transform.
struct ChainSegment {
    Link link;
    Joint joint;
    bool operator==(const ChainSegment&) const = default;
};

struct KinematicChain {
    std::string base_link;
    std::string end_link;
    std::vector<ChainSegment> segments;

    std::size_t joint_count() const { return segments.size(); }
    /// Configuration width: summed dof over non-trainable joints.
    std::size_t dof() const;
    /// Number of trainable Floating joints (6 parameters each).
    std::size_t trainable_count() const;
};

/// Parses the URDF subset: robot, link, joint with origin, axis, parent,
/// child and limit. All other elements are ignored. Throws ParseError naming
/// the offending element.
RobotModel parse_urdf(std::string_view xml_text);
RobotModel load_urdf(const std::string& path);

/// Writes the subset parse_urdf reads; numbers use shortest round-trip form.
std::string serialize_urdf(const RobotModel& model);

/// Structural validation shared by the parser and by model edits.
void validate_model(const RobotModel& model);

/// Downward path from base_link to end_link. Throws ChainError for unknown
/// links or when end_link is not a descendant of base_link.
KinematicChain extract_chain(const RobotModel& model, std::string_view base_link, std::string_view end_link);

/// Root-to-leaf chains for every leaf of the tree, ordered by leaf name.
std::vector<KinematicChain> leaf_chains(const RobotModel& model);

/**
 * Replaces the fixed offset in front of `target_link` with a trainable
 * Floating joint whose initial parameters are the original origin.
 *
 * A Fixed parent joint is turned into the Floating joint in place. A movable
 * parent joint keeps its motion: the Floating joint is inserted in front of it
 * through an extra link named "<target_link>_offset", and the original joint's
 * origin becomes zero. In both cases the forward kinematics at the initial
 * parameters equal those of the input model.
 */
RobotModel substitute_link_with_joint(const RobotModel& model, std::string_view target_link);

/// Name of the Floating joint substitute_link_with_joint creates for `target_link`.
std::string substituted_joint_name(const RobotModel& original, std::string_view target_link);

}  // namespace fkdiff
