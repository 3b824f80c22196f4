# scene: study_room.json
tray = list(filter(object_set=scene(), category="tray"))[0]
print(tray.category)
print(query_attribute(object=tray, attribute_type="color", candidate_attribute_values=["red", "blue"]))
