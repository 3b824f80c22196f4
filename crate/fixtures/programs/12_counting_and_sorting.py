# scene: study_room.json
objects = sorted(scene(), key=lambda o: o.category)
names = [o.category for o in objects]
print(names)
print(f"{len(names)} objects, {names.count('table')} tables")
nearest = min(objects, key=lambda o: query_attribute(object=o, attribute_type="distance"))
print(nearest.category, round(query_attribute(object=nearest, attribute_type="distance"), 3))
print(objects[0])
