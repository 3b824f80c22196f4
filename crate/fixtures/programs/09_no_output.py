# scene: study_room.json
tables = filter(object_set=scene(), category="table")
count = len(tables)
